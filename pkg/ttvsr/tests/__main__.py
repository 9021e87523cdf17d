import unittest

if __name__ == "__main__":
    unittest.main(module="ttvsr.tests", verbosity=2)
