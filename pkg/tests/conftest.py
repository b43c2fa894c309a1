import didd  # noqa: F401  (pins BLAS threads before numpy loads)
