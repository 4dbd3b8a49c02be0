import sys

from poslsh.cli import main

sys.exit(main())
