# Copyright 2026 The eefl Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python bindings for the eefl early-exit federated learning simulator."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import EeflError, run_config as _run_config, run_config_csv as _run_config_csv

__all__ = [name for name in dir() if not name.startswith("_")]


def run(config, threads=1):
    """Runs an experiment config given as a dict or JSON text; returns result rows."""
    text = config if isinstance(config, str) else _json.dumps(config)
    return _run_config(text, threads)


def run_csv(config, threads=1):
    """Like run() but returns the results.csv text."""
    text = config if isinstance(config, str) else _json.dumps(config)
    return _run_config_csv(text, threads)
