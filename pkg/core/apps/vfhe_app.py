"""Raw vFHE: the client batches ciphertexts through one registered circuit."""

from typing import Any, Dict, List, Sequence, Union

import numpy as np

from ..circuits import Circuit
from ..monitor import EnclaveImage, EnclaveProgram
from ..vfhe import CircuitProgram, ClientKeys, ServerContext, VerifiedOutput
from .base import ClientRole, RequestStream, ServerRole


class VfheServer(ServerRole):
    """Evaluates one circuit per request inside the enclave."""

    app = "vfhe"

    def __init__(self, context: ServerContext, circuit: Circuit):
        super().__init__(context)
        self.circuit = circuit
        context.circuits[circuit.name] = circuit

    @property
    def image(self) -> EnclaveImage:
        return self.circuit.image()

    def program(self) -> EnclaveProgram:
        return CircuitProgram(self.circuit, self.context.params)

    def hello(self) -> Dict[str, Any]:
        return {
            "app": self.app,
            "circuit": self.circuit.name,
            "params_id": self.context.params.params_id.hex(),
        }


class VfheClient(ClientRole):
    """Encrypts each value, sends it, and decrypts the verified results."""

    app = "vfhe"

    def __init__(
        self,
        keys: ClientKeys,
        rng: np.random.Generator,
        circuit: Circuit,
        values: Sequence[Union[int, Sequence[int]]],
    ):
        super().__init__(keys, rng)
        self.circuit = circuit
        self.values = list(values)

    def expected_image(self, hello: Dict[str, Any]) -> EnclaveImage:
        return self.circuit.image()

    def requests(self) -> RequestStream:
        for value in self.values:
            yield self.keys.encrypt(value, self.rng).to_bytes()

    def conclude(self, outputs: List[VerifiedOutput]) -> List[int]:
        return [int(self.keys.decrypt(output).coeffs[0]) for output in outputs]

    def expected(self) -> List[int]:
        """Plaintext reference results."""
        params = self.keys.params
        return [
            self.circuit.evaluate_plain(params, [v] if isinstance(v, int) else v)[0]
            for v in self.values
        ]
