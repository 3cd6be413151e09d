"""Parameter presets for the FHE backend and the TPM latency model."""

# BFV parameter sets. Desk and large moduli are primes with q = 1 (mod t),
# which keeps the plaintext-multiplication rounding term at one unit per carry.
FHE_PRESETS = {
    "toy": {
        "n": 16,
        "q": 1099511626399,
        "t": 17,
        "sigma": 3.2,
    },
    "desk": {
        "n": 1024,
        "q": 1125899905138667,
        "t": 65537,
        "sigma": 3.2,
    },
    # Production ring size; only used to compare payload sizes with the
    # attested transcript. Not a 128-bit-secure parameter set either.
    "large": {
        "n": 8192,
        "q": 1125899905138667,
        "t": 65537,
        "sigma": 3.2,
    },
}

# Microseconds charged per TPM quote
TPM_LATENCY_PRESETS = {
    "software": 42,
    "vtpm": 136,
    "dtpm": 195752,
}

DEFAULT_TPM_LATENCY_US = TPM_LATENCY_PRESETS["dtpm"]
