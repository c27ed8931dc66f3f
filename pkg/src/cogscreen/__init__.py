"""Dialogue-level cognitive screening pipeline.

Classifies dementia vs. control and regresses the MMSE score from
pre-extracted multimodal conversation features (acoustic, textual,
hand-crafted), using a CNN-over-utterances + bi-LSTM-over-dialogue
network trained with a joint classification/regression loss.
"""

__version__ = "0.1.0"
