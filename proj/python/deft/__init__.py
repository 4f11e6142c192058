"""Python interface to the deft state-management simulator.

The heavy lifting lives in the C++ extension ``deft._core``; this package
re-exports the main operations and adds small JSON conveniences.
"""

import json

from ._core import (  # noqa: F401
    __version__,
    default_config_json,
    flow_hash,
    replay_hash,
    run_experiment,
    verify,
)


def default_config() -> dict:
    """Default experiment configuration as a dict."""
    return json.loads(default_config_json())


def run(config: dict, keep_trace: bool = False, windows: bool = False) -> dict:
    """Run one experiment from a config dict; see ``run_experiment``."""
    return run_experiment(json.dumps(config), keep_trace, windows)
