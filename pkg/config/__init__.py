# Config module for attested-fhe
