"""
Allow running package as: python -m multisource_separator
"""

import sys

from multisource_separator.main import main

if __name__ == "__main__":
    sys.exit(main())
