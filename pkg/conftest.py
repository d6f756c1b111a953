"""Repository-level pytest setup.

The companion project lives in a directory named after its import package
(``mf_train/``). Under ``--import-mode=importlib`` pytest derives dotted
module names for test files from their rootdir-relative path and imports
the intermediate directories as namespace packages — which would bind
``sys.modules["mf_train"]`` to the project *directory* and shadow the
installed package. Importing the real package first wins, because pytest
reuses an already-imported parent. The core suite stays runnable without
the companion installed.
"""

try:
    import mf_train  # noqa: F401
except ImportError:
    pass
