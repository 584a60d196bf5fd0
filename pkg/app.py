#!/usr/bin/env python3

import os
import sys

for name in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(name, "1")

from blendkit.cli_handler import main  # noqa: E402

sys.exit(main(sys.argv[1:]))
