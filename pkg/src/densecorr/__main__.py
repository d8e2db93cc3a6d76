import sys

from densecorr.cli import main

sys.exit(main())
