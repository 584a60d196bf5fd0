import os
import sys

# Single-threaded BLAS for reproducible latency numbers; must be set before numpy loads
for _name in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_name, "1")

from blendkit.cli_handler import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
