"""Grand-canonical variational Monte Carlo for continuous-space bosons.

The trial state is a permutation-invariant attention network over a padded
particle register, multiplied by closed-form cusp/boundary/number factors.
Everything downstream (sampling, optimization, observables) works in Fock
space, i.e. jointly over particle number and positions.
"""

import os as _os

# Thread cap: must land in XLA_FLAGS before jax first touches its CPU
# backend, which is why it lives at the top of the package.
_threads = _os.environ.get("BOSEFOCK_THREADS")
if _threads:
    try:
        _count = int(_threads)
    except ValueError:
        raise RuntimeError(
            f"BOSEFOCK_THREADS must be a positive integer, got {_threads!r}"
        ) from None
    if _count < 1:
        raise RuntimeError(
            f"BOSEFOCK_THREADS must be a positive integer, got {_threads!r}"
        )
    _flags = _os.environ.get("XLA_FLAGS", "")
    if "intra_op_parallelism_threads" not in _flags:
        _os.environ["XLA_FLAGS"] = (
            f"{_flags} --xla_cpu_multi_thread_eigen=false "
            f"intra_op_parallelism_threads={_count}"
        ).strip()

from jax import config as _jax_config

# All numerics in this package are 64-bit; must be set before any array op.
_jax_config.update("jax_enable_x64", True)

__version__ = "0.1.0"
