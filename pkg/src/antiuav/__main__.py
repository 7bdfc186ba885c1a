import sys

from antiuav.cli import main

sys.exit(main())
