import sys

from silofed.cli import main

sys.exit(main())
