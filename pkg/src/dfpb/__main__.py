import sys

from dfpb.cli import main

sys.exit(main())
