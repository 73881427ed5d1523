"""sigfuse: complementarity-guided multimodal fusion for 1D biomedical signals.

Library layout:

- ``ingest``: labeled patient-grouped signals (synthetic generator, CSV/PGM
  loaders, leakage-free splitting)
- ``dsp``: band-pass filter and the time / frequency / time-frequency views
- ``balance``: adaptive minority oversampling and fidelity validation
- ``nn``: minimal reverse-mode tensor core (layers, Adam, training loop,
  gradient checking, weight persistence)
- ``models``: encoder builders, deep-feature taps, intermediate fusion
- ``complementarity``: correlation / mutual-information / orthogonality
  scores, verdict predicates, fusion-pair selection
- ``stats``: metrics, bootstrap and Bayesian model comparison, ablation
- ``pipeline`` / ``bench``: end-to-end runs and built-in benchmarks
- ``report``: matplotlib figures rendered from run artifacts
- ``cli``: the ``sigfuse`` command
"""

__version__ = "0.1.0"
