# Core module for attested-fhe
