import logging
import sys

from picbench.task import main

if __name__ == '__main__':
  logging.basicConfig(level=logging.INFO)
  main(sys.argv[1:])
