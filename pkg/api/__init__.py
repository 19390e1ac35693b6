"""HTTP surface over saved surrogates"""
