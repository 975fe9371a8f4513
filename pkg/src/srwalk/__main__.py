import sys

from srwalk.cli import main

sys.exit(main())
