"""Multi-user speaker-conditioned feature masking.

Attention over a fixed-size set of enrolled speaker embeddings selects the
target voice per frame; a FiLM- or concat-conditioned LSTM mask net enhances
stacked log-filterbank features; a noise-type gate bypasses the model on
frames without overlapping speech. Ships with a synthetic multi-talker
corpus, a dual-learning-rate trainer, and a speaker-verification EER kit.
"""

__version__ = "0.1.0"
