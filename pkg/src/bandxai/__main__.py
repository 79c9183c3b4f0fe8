import sys

from bandxai.cli import main

sys.exit(main())
