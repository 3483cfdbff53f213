import sys

from simreg.main import main

if __name__ == "__main__":
    # Run the command-line front end from a source checkout
    sys.exit(main())
