"""DriveThru: document digitization with OCR and LLM post-correction.

Upload scanned pages, get machine text back: deterministic image
preprocessing, an external OCR engine, optional dictionary-guided LLM
correction, and CAR/WAR evaluation tooling around it all.
"""

__version__ = "0.1.0"
