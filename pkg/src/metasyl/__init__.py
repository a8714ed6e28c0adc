"""metasyl: meta-learning of syllable-structure biases.

Subpackages cover the full pipeline: an Optimality-Theory language
generator (phonology, langspace), a small reverse-mode autodiff engine
(autodiff), an LSTM seq2seq learner (seq2seq), a MAML meta-trainer
(metalearn), and the analysis harness, reporting, and CLI.
"""

__version__ = "0.1.0"
