import sys

from varsurv.cli import main

sys.exit(main())
