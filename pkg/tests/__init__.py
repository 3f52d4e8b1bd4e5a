# Test suite for the TDC toolkit
