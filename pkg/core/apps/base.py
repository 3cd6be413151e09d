"""Base classes for client and server application roles."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Generator, List, Optional

import numpy as np

from ..crypto import Digest
from ..errors import EvalAborted, ReasonCode
from ..monitor import EnclaveImage, EnclaveProgram, EntryTag
from ..vfhe import ClientKeys, ServerContext, VerifiedOutput

logger = logging.getLogger(__name__)

# A client role yields request payloads and receives each response back.
RequestStream = Generator[bytes, bytes, None]


@dataclass
class ServerInputVariants:
    """Server inputs a misbehaving host may load instead of the committed one."""
    malformed: Optional[bytes] = None
    substituted: Optional[bytes] = None
    modified: Optional[bytes] = None


class ServerRole(ABC):
    """Server half of an application: enclave image, program and public input."""

    app = "base"

    def __init__(self, context: ServerContext):
        self.context = context
        self.refusal: Optional[ReasonCode] = None
        self.published_root: Optional[Digest] = None
        self._pending_eid: Optional[int] = None
        self._registered = set()

    @property
    @abstractmethod
    def image(self) -> EnclaveImage:
        """Image whose measurement clients expect."""
        pass

    @abstractmethod
    def program(self) -> EnclaveProgram:
        """Fresh program instance for one enclave."""
        pass

    @abstractmethod
    def hello(self) -> Dict[str, Any]:
        """Public parameters announced at connect."""
        pass

    def server_input(self) -> Optional[bytes]:
        """Public input committed inside the enclave, if the app has one."""
        return None

    def input_variants(self) -> ServerInputVariants:
        return ServerInputVariants()

    def is_ciphertext_response(self, request: bytes) -> bool:
        return True

    def register(self, image: Optional[EnclaveImage] = None):
        image = image or self.image
        if image.measurement not in self._registered:
            self.context.register_program(image, self.program)
            self._registered.add(image.measurement)

    def open_enclave(
        self,
        image: Optional[EnclaveImage] = None,
        server_input: Optional[bytes] = None,
    ) -> int:
        """Create an enclave and load the server input; aborts mark the role refused."""
        if self.refusal is not None:
            raise EvalAborted(f"{self.app} server refused to serve", self.refusal)
        image = image or self.image
        self.register(image)
        monitor = self.context.monitor
        eid = monitor.enclave_create(image)
        data = server_input if server_input is not None else self.server_input()
        if data is not None:
            try:
                monitor.enclave_load_server_input(eid, data)
            except EvalAborted as e:
                self.refusal = e.reason
                raise
        return eid

    def take_enclave(self) -> int:
        """The enclave prepared at init, or a fresh one."""
        if self._pending_eid is not None:
            eid, self._pending_eid = self._pending_eid, None
            return eid
        return self.open_enclave()

    def discard_pending(self):
        """Close the enclave prepared at init, if it was never taken."""
        if self._pending_eid is not None:
            eid, self._pending_eid = self._pending_eid, None
            self.context.monitor.enclave_close(eid)

    def prepare(self) -> Optional[Digest]:
        """Open the first serving enclave; returns the committed root if any."""
        self._pending_eid = self.open_enclave()
        commitments = [
            e.digest for e in self.context.monitor.transcript(self._pending_eid)
            if e.tag is EntryTag.SERVER_INPUT_COMMITMENT
        ]
        self.published_root = commitments[0] if commitments else None
        return self.published_root


class ClientRole(ABC):
    """Client half of an application."""

    app = "base"
    # Apps whose server input must match a published root
    commits_server_input = False

    def __init__(self, keys: ClientKeys, rng: np.random.Generator):
        self.keys = keys
        self.rng = rng
        self.hello: Dict[str, Any] = {}
        self.reference_root: Optional[Digest] = None

    @abstractmethod
    def expected_image(self, hello: Dict[str, Any]) -> EnclaveImage:
        """Image the client will accept, derived from the greeting and its own settings."""
        pass

    @abstractmethod
    def requests(self) -> RequestStream:
        """Yield request payloads; each yield receives the server's response."""
        pass

    @abstractmethod
    def conclude(self, outputs: List[VerifiedOutput]) -> Any:
        """Decrypt verified outputs into the application result."""
        pass

    def begin(self, hello: Dict[str, Any]) -> Digest:
        self.hello = hello
        return self.expected_image(hello).measurement
