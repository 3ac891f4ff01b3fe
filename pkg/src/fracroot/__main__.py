import sys

from fracroot.cli import main

sys.exit(main())
