import sys

from qkd_audit.cli import main

sys.exit(main())
