"""Key material and proof bundles on disk.

A key directory holds `trust.yaml` (what a client trusts), `client.npz`
(the FHE key pair) and `manufacturer.key` (the seed that certifies a
server TPM; only provisioning reads it).
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import yaml

from .crypto import Digest, SigKeyPair
from .errors import DecodeError
from .fhe import FheKeyPair, FheParams, PublicKey, SecretKey, fhe_gen
from .monitor import AttestedTranscript, monitor_measurements
from .vfhe import DEFAULT_SM_BINARY, ClientKeys, TrustAnchors, verify_attestation

logger = logging.getLogger(__name__)

TRUST_FILE = "trust.yaml"
CLIENT_FILE = "client.npz"
ROOT_FILE = "manufacturer.key"


@dataclass
class KeyDirectory:
    path: Path

    @property
    def trust_file(self) -> Path:
        return self.path / TRUST_FILE

    @property
    def client_file(self) -> Path:
        return self.path / CLIENT_FILE

    @property
    def root_file(self) -> Path:
        return self.path / ROOT_FILE

    def exists(self) -> bool:
        return self.trust_file.exists() and self.client_file.exists()


def save_keypair(path: Path, keys: FheKeyPair):
    params = keys.params
    np.savez(
        path,
        n=params.n,
        q=np.int64(params.q),
        t=params.t,
        sigma=params.sigma,
        b=keys.public.b,
        a=keys.public.a,
        s=keys.secret.s,
        key_id=np.frombuffer(keys.public.key_id, dtype=np.uint8),
    )


def load_keypair(path: Path) -> FheKeyPair:
    try:
        with np.load(path) as data:
            params = FheParams(int(data["n"]), int(data["q"]), int(data["t"]), float(data["sigma"]))
            key_id = data["key_id"].astype(np.uint8).tobytes()
            public = PublicKey(params, data["b"].astype(np.int64), data["a"].astype(np.int64), key_id)
            secret = SecretKey(params, data["s"].astype(np.int64), key_id)
    except (OSError, KeyError, ValueError) as e:
        raise DecodeError(f"Cannot read key pair {path}: {e}") from e
    return FheKeyPair(public, secret)


def save_trust(path: Path, anchors: TrustAnchors, preset: str):
    data = dict(anchors.to_dict(), preset=preset)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(data, f, default_flow_style=False)


def load_trust(path: Path) -> Tuple[TrustAnchors, Optional[str]]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise DecodeError(f"Cannot read trust file {path}: {e}") from e
    return TrustAnchors.from_dict(data), data.get("preset")


def generate_keys(
    directory: Path,
    params: FheParams,
    rng: np.random.Generator,
    preset: str,
    sm_binary: bytes = DEFAULT_SM_BINARY,
) -> KeyDirectory:
    """Fresh manufacturer root and client FHE keys, written to `directory`."""
    keydir = KeyDirectory(Path(directory))
    keydir.path.mkdir(parents=True, exist_ok=True)
    root = SigKeyPair.generate(rng)
    keys = fhe_gen(params, rng)
    keydir.root_file.write_bytes(root.secret_key)
    save_keypair(keydir.client_file, keys)
    save_trust(keydir.trust_file, TrustAnchors(root.public_key, monitor_measurements(sm_binary)), preset)
    logger.info("Keys written to %s", keydir.path)
    return keydir


def load_client(directory: Path) -> ClientKeys:
    keydir = KeyDirectory(Path(directory))
    anchors, _ = load_trust(keydir.trust_file)
    return ClientKeys(load_keypair(keydir.client_file), anchors)


def load_root(directory: Path) -> SigKeyPair:
    path = KeyDirectory(Path(directory)).root_file
    try:
        return SigKeyPair.from_seed(path.read_bytes())
    except OSError as e:
        raise DecodeError(f"Cannot read manufacturer key {path}: {e}") from e


@dataclass
class ProofBundle:
    """Everything needed to re-check a session's attestation offline."""
    nonce: bytes
    attested: AttestedTranscript
    expected_circuit: Optional[Digest] = None
    reference_root: Optional[Digest] = None

    def to_dict(self) -> dict:
        return {
            "nonce": self.nonce.hex(),
            "attested": self.attested.to_bytes().hex(),
            "expected_circuit": self.expected_circuit.hex() if self.expected_circuit else None,
            "reference_root": self.reference_root.hex() if self.reference_root else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProofBundle":
        try:
            circuit = data.get("expected_circuit")
            root = data.get("reference_root")
            return cls(
                nonce=bytes.fromhex(data["nonce"]),
                attested=AttestedTranscript.from_bytes(bytes.fromhex(data["attested"])),
                expected_circuit=Digest.from_hex(circuit) if circuit else None,
                reference_root=Digest.from_hex(root) if root else None,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DecodeError(f"Invalid proof bundle: {e}") from e

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(self.to_dict(), f, default_flow_style=False)
        return path

    @classmethod
    def load(cls, path: Path) -> "ProofBundle":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f)
        except (OSError, yaml.YAMLError) as e:
            raise DecodeError(f"Cannot read proof bundle {path}: {e}") from e
        if not isinstance(data, dict):
            raise DecodeError(f"Proof bundle {path} is not a mapping")
        return cls.from_dict(data)

    def verify(self, anchors: TrustAnchors) -> Digest:
        """Endorsement, quote, monitor, fold, circuit and commitment; raises VerificationError."""
        return verify_attestation(
            anchors, self.attested, self.nonce, self.expected_circuit, self.reference_root
        )

