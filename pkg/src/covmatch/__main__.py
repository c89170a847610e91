import sys

from covmatch.cli import main

sys.exit(main())
