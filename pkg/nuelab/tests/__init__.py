# Unit tests for the nuelab package.
