"""Client/server session over a framed channel.

Server: HELLO, then one RESPONSE per REQUEST, PROOF on ATTEST, or REFUSAL
when its enclave aborts. Client: verify the proof against everything it
sent and received, and only then decrypt.
"""

import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

from .crypto import Digest
from .errors import (
    AfheError,
    DecodeError,
    DecryptionFailure,
    EvalAborted,
    FramingError,
    ReasonCode,
    SessionError,
    VerificationError,
)
from .monitor import AttestedTranscript
from .apps.base import ClientRole, ServerRole
from .tpm import NONCE_SIZE
from .transport import Channel, FrameTag, channel_pair, send_frame
from .vfhe import verify_session

logger = logging.getLogger(__name__)


def encode_hello(hello: Dict[str, Any]) -> bytes:
    return yaml.safe_dump(hello, sort_keys=True).encode("utf-8")


def decode_hello(payload: bytes) -> Dict[str, Any]:
    try:
        hello = yaml.safe_load(payload.decode("utf-8"))
    except (UnicodeDecodeError, yaml.YAMLError) as e:
        raise DecodeError(f"Unreadable HELLO: {e}") from e
    if not isinstance(hello, dict):
        raise DecodeError("HELLO payload is not a mapping")
    return hello


@dataclass
class SessionBench:
    """Wall-clock phases of one session plus the TPM's virtual charge."""
    query_ms: float = 0.0
    attest_ms: float = 0.0
    verify_ms: float = 0.0
    tpm_virtual_ms: float = 0.0
    signatures: int = 0
    requests: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0


@dataclass
class SessionResult:
    app: str
    accepted: bool
    decrypted: int = 0
    reasons: List[ReasonCode] = field(default_factory=list)
    output: Any = None
    transcript_digest: Optional[Digest] = None
    attested: Optional[AttestedTranscript] = None
    nonce: Optional[bytes] = None
    bench: SessionBench = field(default_factory=SessionBench)
    detail: str = ""

    @property
    def reason(self) -> Optional[ReasonCode]:
        return self.reasons[0] if self.reasons else None


class ServerHost:
    """Honest host: relays frames between the channel and the server's enclave.

    Misbehaving hosts override `prepare`, `open`, `answer` or `attest`.
    """

    def __init__(self, role: ServerRole):
        self.role = role
        self.monitor = role.context.monitor
        self.error: Optional[BaseException] = None

    @property
    def published_root(self) -> Optional[Digest]:
        return self.role.published_root

    def prepare(self):
        """Server init: open the first enclave and publish the input commitment."""
        if self.role.server_input() is not None and self.role.published_root is None:
            try:
                self.role.prepare()
            except EvalAborted as e:
                logger.warning("%s server refused at init: %s", self.role.app, e.reason)

    def hello(self) -> Dict[str, Any]:
        return self.role.hello()

    def open(self) -> int:
        return self.role.take_enclave()

    def answer(self, eid: int, request: bytes) -> bytes:
        return self.monitor.enclave_run(eid, request)

    def attest(self, eid: int, nonce: bytes) -> AttestedTranscript:
        return self.monitor.attest_transcript(eid, nonce)

    def serve(self, channel: Channel):
        """Serve one session on `channel`."""
        try:
            send_frame(channel, FrameTag.HELLO, encode_hello(self.hello()))
            try:
                eid = self.open()
            except EvalAborted as e:
                send_frame(channel, FrameTag.REFUSAL, str(e.reason).encode())
                return
            while True:
                frame = channel.expect(FrameTag.REQUEST, FrameTag.ATTEST, FrameTag.CLOSE)
                if frame.tag is FrameTag.CLOSE:
                    return
                if frame.tag is FrameTag.ATTEST:
                    attested = self.attest(eid, frame.payload)
                    send_frame(channel, FrameTag.PROOF, attested.to_bytes())
                    continue
                try:
                    response = self.answer(eid, frame.payload)
                except EvalAborted as e:
                    send_frame(channel, FrameTag.REFUSAL, str(e.reason).encode())
                    return
                send_frame(channel, FrameTag.RESPONSE, response)
        except FramingError as e:
            logger.debug("Server session ended: %s", e)
        except Exception as e:
            self.error = e
            logger.error("Server host failed: %s", e)
        finally:
            channel.close()


def _refusal_reason(payload: bytes) -> ReasonCode:
    try:
        return ReasonCode(payload.decode())
    except (UnicodeDecodeError, ValueError):
        return ReasonCode.PROTOCOL_ERROR


class ClientSession:
    """Drives a client role over a channel and verifies before decrypting."""

    def __init__(self, role: ClientRole, nonce: Optional[bytes] = None):
        self.role = role
        self.nonce = nonce
        self.sent: List[bytes] = []
        self.received: List[bytes] = []

    def _fresh_nonce(self) -> bytes:
        if self.nonce is not None:
            return bytes(self.nonce)
        return self.role.rng.bytes(NONCE_SIZE)

    def _receive(self, channel: Channel, tag: FrameTag) -> bytes:
        frame = channel.expect(tag, FrameTag.REFUSAL, FrameTag.CLOSE)
        if frame.tag is FrameTag.REFUSAL:
            reason = _refusal_reason(frame.payload)
            raise SessionError(f"server refused: {reason}", reason)
        if frame.tag is FrameTag.CLOSE:
            raise SessionError("server closed the session early")
        return frame.payload

    def run(self, channel: Channel) -> SessionResult:
        role = self.role
        keys = role.keys
        result = SessionResult(app=role.app, accepted=False)
        bench = result.bench
        before = keys.decryption_count
        try:
            measurement = role.begin(decode_hello(self._receive(channel, FrameTag.HELLO)))

            started = time.perf_counter()
            stream = role.requests()
            try:
                request = next(stream)
                while True:
                    self.sent.append(request)
                    send_frame(channel, FrameTag.REQUEST, request)
                    response = self._receive(channel, FrameTag.RESPONSE)
                    self.received.append(response)
                    request = stream.send(response)
            except StopIteration:
                pass
            bench.query_ms = (time.perf_counter() - started) * 1000
            bench.requests = len(self.sent)

            nonce = self._fresh_nonce()
            result.nonce = nonce
            started = time.perf_counter()
            send_frame(channel, FrameTag.ATTEST, nonce)
            attested = AttestedTranscript.from_bytes(self._receive(channel, FrameTag.PROOF))
            bench.attest_ms = (time.perf_counter() - started) * 1000
            result.attested = attested

            if role.commits_server_input and role.reference_root is None:
                raise VerificationError(
                    ReasonCode.COMMITMENT_MISMATCH, "no published root to check the server input against"
                )
            started = time.perf_counter()
            outputs = verify_session(
                keys,
                self.sent,
                self.received,
                attested,
                nonce,
                reference_root=role.reference_root,
                expected_circuit=measurement,
            )
            bench.verify_ms = (time.perf_counter() - started) * 1000
            result.transcript_digest = outputs[0].transcript_digest if outputs else attested.digest
            result.output = role.conclude(outputs)
            result.accepted = True
        except VerificationError as e:
            result.reasons.append(e.reason)
            result.detail = e.detail
        except DecryptionFailure as e:
            result.reasons.append(ReasonCode.DECRYPTION_FAILURE)
            result.detail = str(e)
        except SessionError as e:
            result.reasons.append(e.reason or ReasonCode.PROTOCOL_ERROR)
            result.detail = str(e)
        except (FramingError, DecodeError) as e:
            result.reasons.append(ReasonCode.TRANSPORT_ERROR)
            result.detail = str(e)
        finally:
            result.decrypted = keys.decryption_count - before
            bench.bytes_sent = channel.bytes_sent
            bench.bytes_received = channel.bytes_received
            try:
                send_frame(channel, FrameTag.CLOSE)
            except FramingError:
                pass
            channel.close()

        if result.accepted:
            logger.info("%s session accepted, %d requests", role.app, bench.requests)
        else:
            logger.warning("%s session rejected: %s", role.app, result.reason)
        return result


def run_session(
    client: ClientRole,
    server: ServerRole,
    attack=None,
    transport: str = "inproc",
    nonce: Optional[bytes] = None,
    host: Optional[ServerHost] = None,
    port: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> SessionResult:
    """One complete session; `attack` (an AttackBehavior) swaps in a misbehaving host."""
    if host is None:
        if attack is not None:
            from .attacks import make_host

            host = make_host(attack, server, rng or np.random.default_rng())
        else:
            host = ServerHost(server)
    host.prepare()
    if client.reference_root is None and host.published_root is not None:
        client.reference_root = host.published_root

    tpm = server.context.tpm
    signatures = tpm.signature_count
    virtual_us = tpm.clock.elapsed_us

    client_end, server_end = channel_pair(transport, port=port)
    thread = threading.Thread(target=host.serve, args=(server_end,), daemon=True)
    thread.start()
    result = ClientSession(client, nonce).run(client_end)
    thread.join(timeout=client_end.timeout)
    if thread.is_alive():
        logger.warning("Server host did not finish")
    if host.error is not None and result.accepted:
        raise SessionError(f"server host failed after acceptance: {host.error}")

    result.bench.signatures = tpm.signature_count - signatures
    result.bench.tpm_virtual_ms = (tpm.clock.elapsed_us - virtual_us) / 1000.0
    return result


def serve_forever(host: ServerHost, channel_factory, sessions: Optional[int] = None):
    """Serve sessions one after another; `channel_factory()` yields the next server end."""
    host.prepare()
    served = 0
    while sessions is None or served < sessions:
        try:
            channel = channel_factory()
        except AfheError as e:
            logger.error("Listener failed: %s", e)
            break
        host.serve(channel)
        served += 1
