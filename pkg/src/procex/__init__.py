"""Process model information extraction toolkit.

Extracts mentions, entities, relations, and declarative constraints
from natural-language process descriptions with a modular prompting
pipeline, scores the results against gold annotations, and compiles
extracted information into BPMN 2.0 XML.
"""

__version__ = "0.1.0"
