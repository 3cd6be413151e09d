# CLI module for attested-fhe
