"""
Tag streaming service over TCP, its capture client and a loopback benchmark.

Continuous mode pushes frames as records become available. Request mode
answers each pull request with every record from the requested sequence to
the current end. In both modes the end of the stream is signalled by closing
the connection.
"""

import logging
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional, Tuple

import numpy as np

from models import ServerConfig, TransferMode
from .errors import StreamError
from .stream import (
    FRAME_HEADER, REQUEST, RECORD_SIZE, SequencedBuffer, TokenBucket, decode_records,
    encode_records, pack_frame, pack_request, records_from_bytes, unpack_request
)

logger = logging.getLogger(__name__)

READ_TIMEOUT = 0.2


def recv_exact(sock: socket.socket, size: int) -> Optional[bytes]:
    """Exactly ``size`` bytes, or None on a clean end of stream"""
    chunks = []
    remaining = size
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            if remaining == size:
                return None
            raise StreamError(f"connection closed inside a {size}-byte message")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> Optional[np.ndarray]:
    header = recv_exact(sock, FRAME_HEADER.size)
    if header is None:
        return None
    (count,) = FRAME_HEADER.unpack(header)
    if count == 0:
        return np.zeros(0, dtype=np.uint64)
    payload = recv_exact(sock, count * RECORD_SIZE)
    if payload is None:
        raise StreamError("connection closed before the frame payload")
    return records_from_bytes(payload)


class _TagRequestHandler(socketserver.BaseRequestHandler):
    """One client connection"""

    def handle(self) -> None:
        service: TagServer = self.server.service
        buffer = service.buffer
        reader = buffer.register(0)
        service.ensure_producer()
        peer = self.client_address
        logger.info("client %s connected (%s mode)", peer, service.config.mode.value)
        try:
            if service.config.mode is TransferMode.CONTINUOUS:
                self._push(service, buffer, reader)
            else:
                self._answer(service, buffer, reader)
        except (ConnectionError, BrokenPipeError) as exc:
            logger.info("client %s disconnected: %s", peer, exc)
        finally:
            buffer.unregister(reader)

    def _push(self, service: 'TagServer', buffer: SequencedBuffer, reader: int) -> None:
        cursor = 0
        while not service.stopping.is_set():
            first, words, missed = buffer.read(cursor, service.config.frame_records, READ_TIMEOUT)
            service.note_missed(missed)
            if words.size:
                self.request.sendall(pack_frame(words))
                cursor = first + words.size
                buffer.advance(reader, cursor)
            elif buffer.exhausted(max(cursor, first)):
                return

    def _answer(self, service: 'TagServer', buffer: SequencedBuffer, reader: int) -> None:
        while not service.stopping.is_set():
            try:
                data = recv_exact(self.request, REQUEST.size)
                if data is None:
                    return
                sequence = unpack_request(data)
            except StreamError as exc:
                logger.warning("malformed request from %s: %s; closing", self.client_address, exc)
                return
            buffer.advance(reader, sequence)
            if buffer.exhausted(sequence):
                return
            first, words, missed = buffer.read(sequence, buffer.capacity, timeout=0)
            service.note_missed(missed)
            self.request.sendall(pack_frame(words))


class _ThreadingServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class TagServer:
    """
    Serves records produced by ``records`` (an iterable of uint64 word arrays).
    The producer starts with the first client; its output is paced to
    ``config.rate`` records/s when a rate is set.
    """

    def __init__(self, config: ServerConfig, records: Iterable[np.ndarray], block: bool = False):
        errors = config.get_validation_errors()
        if errors:
            raise StreamError(f"invalid server settings: {'; '.join(errors)}")
        self.config = config
        self.buffer = SequencedBuffer(config.buffer_records, block=block)
        self.stopping = threading.Event()
        self.missed = 0
        self.produced = 0
        self._records = records
        self._producer: Optional[threading.Thread] = None
        self._lock = threading.Lock()
        self._server: Optional[_ThreadingServer] = None
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> Tuple[str, int]:
        if self._server is None:
            return self.config.address
        return self._server.server_address[:2]

    def ensure_producer(self) -> None:
        with self._lock:
            if self._producer is None:
                self._producer = threading.Thread(target=self._produce, name="tag-producer",
                                                  daemon=True)
                self._producer.start()

    def _produce(self) -> None:
        bucket = TokenBucket(self.config.rate)
        # paced output is released in slices of about one millisecond
        step = max(1024, int(self.config.rate / 1000)) if self.config.rate else 1 << 30
        try:
            for words in self._records:
                for start in range(0, len(words), step):
                    if self.stopping.is_set():
                        return
                    piece = words[start:start + step]
                    bucket.consume(len(piece))
                    self.buffer.append(piece)
                    self.produced += len(piece)
        except StreamError as exc:
            logger.warning("producer stopped: %s", exc)
        finally:
            self.buffer.close()
            if self.buffer.dropped:
                logger.warning("%d records dropped by the bounded buffer", self.buffer.dropped)
            logger.info("producer finished after %d records", self.produced)

    def note_missed(self, missed: int) -> None:
        if missed:
            with self._lock:
                self.missed += missed
            logger.debug("client skipped %d dropped records", missed)

    def start(self) -> Tuple[str, int]:
        """Bind and serve in a background thread; returns the bound address"""
        try:
            self._server = _ThreadingServer(self.config.address, _TagRequestHandler)
        except OSError as exc:
            raise StreamError(f"cannot bind {self.config.endpoint}: {exc}") from exc
        self._server.service = self
        self._thread = threading.Thread(target=self._server.serve_forever, name="tag-server",
                                        daemon=True)
        self._thread.start()
        logger.info("serving tags on %s:%d", *self.address)
        return self.address

    def stop(self) -> None:
        self.stopping.set()
        self.buffer.close()
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
        logger.info("server stopped")

    def serve_forever(self) -> None:
        """Blocking serve until interrupted"""
        self.start()
        try:
            while not self.stopping.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            logger.info("interrupted")
        finally:
            self.stop()

    def __enter__(self) -> 'TagServer':
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()


def serve(config: ServerConfig, records: Iterable[np.ndarray], block: bool = False) -> None:
    """Run the tag service until interrupted"""
    TagServer(config, records, block=block).serve_forever()


@dataclass
class CaptureResult:
    """Records received by a client"""
    words: np.ndarray
    frame_sizes: List[int] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def rate(self) -> float:
        return self.words.size / self.elapsed if self.elapsed > 0 else 0.0


def capture_stream(address: Tuple[str, int], mode: TransferMode = TransferMode.CONTINUOUS,
                   period: float = 0.05, timeout: float = 30.0) -> CaptureResult:
    """Connect, read until the server closes the stream and return everything received"""
    frames: List[np.ndarray] = []
    sizes: List[int] = []
    started = time.perf_counter()
    try:
        with socket.create_connection(address, timeout=timeout) as sock:
            if mode is TransferMode.CONTINUOUS:
                while True:
                    words = read_frame(sock)
                    if words is None:
                        break
                    frames.append(words)
                    sizes.append(int(words.size))
            else:
                next_sequence = 0
                deadline = time.monotonic()
                while True:
                    sock.sendall(pack_request(next_sequence))
                    words = read_frame(sock)
                    if words is None:
                        break
                    frames.append(words)
                    sizes.append(int(words.size))
                    next_sequence += int(words.size)
                    deadline += period
                    time.sleep(max(0.0, deadline - time.monotonic()))
    except OSError as exc:
        raise StreamError(f"capture from {address[0]}:{address[1]} failed: {exc}") from exc
    elapsed = time.perf_counter() - started
    words = np.concatenate(frames) if frames else np.zeros(0, dtype=np.uint64)
    logger.info("captured %d records in %d frames", words.size, len(frames))
    return CaptureResult(words, sizes, elapsed)


def sequence_records(count: int, chunk: int = 1 << 16) -> Iterator[np.ndarray]:
    """Sequence-stamped test records: coarse carries the sequence number"""
    for start in range(0, count, chunk):
        seq = np.arange(start, min(start + chunk, count), dtype=np.uint64)
        yield encode_records(seq, (seq % np.uint64(256)).astype(np.int64),
                             (seq % np.uint64(16)).astype(np.int64))


def verify_sequence(words: np.ndarray, count: int) -> Tuple[bool, bool]:
    """(lossless, ordered) for records produced by sequence_records"""
    coarse = decode_records(words)[0]
    ordered = bool(np.all(np.diff(coarse.astype(np.int64)) == 1)) if coarse.size > 1 else True
    lossless = coarse.size == count and ordered and (count == 0 or int(coarse[0]) == 0)
    return lossless, ordered


def loopback_benchmark(count: int, config: Optional[ServerConfig] = None) -> dict:
    """Serve ``count`` sequence-stamped records over loopback and time the capture"""
    config = config or ServerConfig(endpoint="127.0.0.1:0")
    server = TagServer(config, sequence_records(count), block=True)
    with server:
        result = capture_stream(server.address, config.mode, config.period_ms / 1000.0)
    lossless, ordered = verify_sequence(result.words, count)
    return {
        'records': int(result.words.size),
        'elapsed_s': result.elapsed,
        'rate_records_per_s': result.rate,
        'frames': len(result.frame_sizes),
        'dropped': server.buffer.dropped,
        'missed': server.missed,
        'lossless': lossless,
        'ordered': ordered,
    }
