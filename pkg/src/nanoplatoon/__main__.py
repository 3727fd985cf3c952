import sys

from nanoplatoon.cli import main

sys.exit(main())
