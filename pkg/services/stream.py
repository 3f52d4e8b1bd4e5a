"""
Acquisition data path: 64-bit tag records, wire frames, capture files, the
48-bit coarse counter, a bounded sequenced buffer and the double-buffer
discrete-event model.

Record layout (one big-endian 64-bit word):
    bits 63..16  coarse count (48 bits)
    bits 15..8   fine bin index
    bits  7..4   channel
    bits  3..0   flags (bit 0: calibration valid, others zero)

Frames are a little-endian u32 record count followed by the records. A pull
request is one opcode byte (0x01) and a little-endian u64 holding the next
sequence number the client expects.
"""

import logging
import struct
import threading
import time
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import simpy

from models import (
    RawTag, TagBatch, BufferModel, BufferReport, TransferMode, COARSE_BITS, COARSE_MODULUS
)
from .errors import StreamError

logger = logging.getLogger(__name__)

RECORD_DTYPE = np.dtype('>u8')
RECORD_SIZE = RECORD_DTYPE.itemsize
FRAME_HEADER = struct.Struct('<I')
REQUEST = struct.Struct('<BQ')
OPCODE_PULL = 0x01
CAPTURE_HEADER = struct.Struct('<4sHHd')
CAPTURE_MAGIC = b"TDCR"
CAPTURE_VERSION = 1
FLAG_CALIBRATED = 0x1


def _check_fields(coarse, fine, channel, flags) -> None:
    if np.any(np.asarray(coarse, dtype=object) >= COARSE_MODULUS) or np.any(np.asarray(coarse) < 0):
        raise StreamError("coarse count does not fit in 48 bits")
    if np.any(np.asarray(fine) > 0xFF) or np.any(np.asarray(fine) < 0):
        raise StreamError("fine value does not fit in 8 bits")
    if np.any(np.asarray(channel) > 0xF) or np.any(np.asarray(channel) < 0):
        raise StreamError("channel does not fit in 4 bits")
    if np.any(np.asarray(flags) > 0xF) or np.any(np.asarray(flags) < 0):
        raise StreamError("flags do not fit in 4 bits")


def encode_record(tag: RawTag, flags: int = 0) -> int:
    """One tag as a 64-bit word"""
    _check_fields(tag.coarse, tag.fine, tag.channel, flags)
    return (tag.coarse << 16) | (tag.fine << 8) | (tag.channel << 4) | flags


def decode_record(word: int) -> Tuple[RawTag, int]:
    word = int(word)
    if not 0 <= word < 1 << 64:
        raise StreamError("record is not a 64-bit word")
    return RawTag(word >> 16, (word >> 8) & 0xFF, (word >> 4) & 0xF), word & 0xF


def encode_records(coarse, fine, channel=0, flags=0) -> np.ndarray:
    """Vectorized encode_record; returns native uint64 words"""
    coarse = np.asarray(coarse, dtype=np.uint64)
    fine = np.asarray(fine, dtype=np.int64)
    channel = np.broadcast_to(np.asarray(channel, dtype=np.int64), fine.shape)
    flags = np.broadcast_to(np.asarray(flags, dtype=np.int64), fine.shape)
    if coarse.size and int(coarse.max()) >= COARSE_MODULUS:
        raise StreamError("coarse count does not fit in 48 bits")
    _check_fields(0, fine, channel, flags)
    return ((coarse << np.uint64(16)) | (fine.astype(np.uint64) << np.uint64(8))
            | (channel.astype(np.uint64) << np.uint64(4)) | flags.astype(np.uint64))


def encode_batch(tags: TagBatch, flags: int = 0) -> np.ndarray:
    return encode_records(tags.coarse, tags.fine, tags.channel, flags)


def decode_records(words) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(coarse, fine, channel, flags) columns of a word array"""
    words = np.asarray(words, dtype=np.uint64)
    coarse = words >> np.uint64(16)
    fine = ((words >> np.uint64(8)) & np.uint64(0xFF)).astype(np.int64)
    channel = ((words >> np.uint64(4)) & np.uint64(0xF)).astype(np.int64)
    flags = (words & np.uint64(0xF)).astype(np.int64)
    return coarse, fine, channel, flags


def records_to_bytes(words) -> bytes:
    return np.asarray(words, dtype=np.uint64).astype(RECORD_DTYPE).tobytes()


def records_from_bytes(data: bytes) -> np.ndarray:
    if len(data) % RECORD_SIZE:
        raise StreamError(f"payload of {len(data)} bytes is not a whole number of records")
    return np.frombuffer(data, dtype=RECORD_DTYPE).astype(np.uint64)


def pack_frame(words) -> bytes:
    words = np.asarray(words, dtype=np.uint64)
    return FRAME_HEADER.pack(words.size) + records_to_bytes(words)


def pack_request(next_sequence: int) -> bytes:
    return REQUEST.pack(OPCODE_PULL, next_sequence)


def unpack_request(data: bytes) -> int:
    """Sequence number carried by a pull request"""
    if len(data) != REQUEST.size:
        raise StreamError(f"request frame must be {REQUEST.size} bytes, got {len(data)}")
    opcode, sequence = REQUEST.unpack(data)
    if opcode != OPCODE_PULL:
        raise StreamError(f"unknown request opcode 0x{opcode:02x}")
    return sequence


def write_capture(path: Path, words, f_s: float) -> Path:
    """Raw records behind a 16-byte header (magic, version, reserved, f_s)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(CAPTURE_HEADER.pack(CAPTURE_MAGIC, CAPTURE_VERSION, 0, float(f_s)))
        f.write(records_to_bytes(words))
    return path


def read_capture(path: Path) -> Tuple[float, np.ndarray]:
    """(f_s, words) of a capture file"""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise StreamError(f"cannot read capture {path}: {exc}") from exc
    if len(data) < CAPTURE_HEADER.size:
        raise StreamError(f"{path} is too short to be a capture file")
    magic, version, _, f_s = CAPTURE_HEADER.unpack_from(data)
    if magic != CAPTURE_MAGIC:
        raise StreamError(f"{path} is not a capture file (magic {magic!r})")
    if version != CAPTURE_VERSION:
        raise StreamError(f"unsupported capture version {version}")
    return f_s, records_from_bytes(data[CAPTURE_HEADER.size:])


def overflow_horizon(f_s: float) -> float:
    """Seconds until the 48-bit coarse counter wraps"""
    if not f_s > 0:
        raise StreamError("f_s must be positive")
    return COARSE_MODULUS / f_s


def unwrap_coarse(coarse) -> Tuple[np.ndarray, np.ndarray]:
    """
    Monotone coarse counts from wrapped 48-bit values, and a mask of the
    records that follow at least one wrap.
    """
    coarse = np.asarray(coarse, dtype=np.uint64)
    if coarse.size == 0:
        return coarse.copy(), np.zeros(0, dtype=bool)
    wraps = np.concatenate(([0], np.cumsum(np.diff(coarse.astype(np.int64)) < 0)))
    unwrapped = coarse + wraps.astype(np.uint64) * np.uint64(COARSE_MODULUS)
    return unwrapped, wraps > 0


class TokenBucket:
    """Blocking rate limiter for wall-clock pacing (records per second)"""

    def __init__(self, rate: Optional[float], burst: Optional[float] = None):
        self.rate = rate
        self.burst = burst if burst is not None else (rate or 0.0) * 0.01
        self._tokens = self.burst
        self._last = time.monotonic()

    def consume(self, amount: int) -> None:
        if not self.rate:
            return
        while True:
            now = time.monotonic()
            self._tokens = min(max(self.burst, amount), self._tokens + (now - self._last) * self.rate)
            self._last = now
            if self._tokens >= amount:
                self._tokens -= amount
                return
            time.sleep((amount - self._tokens) / self.rate)


class SequencedBuffer:
    """
    Bounded ring of records with absolute sequence numbers. One producer
    appends; readers fetch by sequence. When ``block`` is False the oldest
    records are dropped on overflow and counted; when True the producer waits
    for the slowest registered reader.
    """

    def __init__(self, capacity: int, block: bool = False):
        if capacity < 1:
            raise StreamError("buffer capacity must be at least 1")
        self.capacity = int(capacity)
        self.block = block
        self._ring = np.zeros(self.capacity, dtype=np.uint64)
        self._start = 0
        self._end = 0
        self._closed = False
        self._readers: Dict[int, int] = {}
        self._next_reader = 0
        self.dropped = 0
        self._cond = threading.Condition()

    @property
    def start_sequence(self) -> int:
        return self._start

    @property
    def end_sequence(self) -> int:
        return self._end

    @property
    def closed(self) -> bool:
        return self._closed

    def register(self, position: int = 0) -> int:
        with self._cond:
            reader = self._next_reader
            self._next_reader += 1
            self._readers[reader] = position
            return reader

    def unregister(self, reader: int) -> None:
        with self._cond:
            self._readers.pop(reader, None)
            self._cond.notify_all()

    def advance(self, reader: int, position: int) -> None:
        """Record that ``reader`` no longer needs records before ``position``"""
        with self._cond:
            if reader in self._readers:
                self._readers[reader] = max(self._readers[reader], position)
                self._cond.notify_all()

    def _writable(self) -> int:
        if not self._readers:
            return self.capacity
        floor = max(min(self._readers.values()), self._start)
        return self.capacity - (self._end - floor)

    def _unread_before(self, position: int) -> int:
        """Records in [start, position) that a registered reader has not passed"""
        if not self._readers:
            return position - self._start
        return max(0, position - max(self._start, min(self._readers.values())))

    def append(self, words) -> int:
        """Add records; returns how many were dropped to make room"""
        words = np.asarray(words, dtype=np.uint64)
        dropped = 0
        offset = 0
        while offset < words.size:
            with self._cond:
                if self._closed:
                    raise StreamError("buffer is closed")
                if self.block:
                    while self._writable() <= 0 and not self._closed:
                        self._cond.wait(0.1)
                    if self._closed:
                        raise StreamError("buffer is closed")
                    room = self._writable()
                else:
                    room = self.capacity
                chunk = words[offset:offset + room]
                positions = (self._end + np.arange(chunk.size)) % self.capacity
                self._ring[positions] = chunk
                self._end += chunk.size
                if self._end - self._start > self.capacity:
                    evicted_to = self._end - self.capacity
                    dropped += self._unread_before(evicted_to)
                    self._start = evicted_to
                offset += chunk.size
                self._cond.notify_all()
        if dropped:
            self.dropped += dropped
            logger.debug("buffer overflow: %d oldest records dropped", dropped)
        return dropped

    def read(self, sequence: int, max_records: int,
             timeout: Optional[float] = None) -> Tuple[int, np.ndarray, int]:
        """
        Records from ``sequence`` on: (first_sequence, words, missed) where
        ``missed`` counts requested records that were already dropped. Waits up
        to ``timeout`` for data; returns an empty array on timeout or close.
        """
        with self._cond:
            if timeout is None or timeout > 0:
                self._cond.wait_for(lambda: self._end > sequence or self._closed, timeout)
            missed = max(0, self._start - sequence)
            first = max(sequence, self._start)
            count = max(0, min(self._end - first, max_records))
            positions = (first + np.arange(count)) % self.capacity
            return first, self._ring[positions].copy(), missed

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def exhausted(self, sequence: int) -> bool:
        """True once the producer is done and ``sequence`` reached the end"""
        with self._cond:
            return self._closed and sequence >= self._end


class _DoubleBufferSim:
    """simpy model of the two-half memory in continuous transfer mode"""

    def __init__(self, env: simpy.Environment, model: BufferModel, report: BufferReport):
        self.env = env
        self.model = model
        self.report = report
        self.busy = [False, False]
        self.interrupts = simpy.Store(env)
        env.process(self.fill())
        env.process(self.drain())

    def fill(self):
        half, fill_time = self.model.half, self.model.half_fill_time
        current = 0
        while True:
            yield self.env.timeout(fill_time)
            self.report.records_in += half
            self.busy[current] = True
            self.report.timeline.append((self.env.now, f"half_full:{current}"))
            yield self.interrupts.put(current)
            current = 1 - current
            while self.busy[current]:
                # the other half is still transferring: this fill period is lost
                self.report.overflow_events += 1
                if self.report.first_overflow is None:
                    self.report.first_overflow = self.env.now
                    logger.info("double buffer overflow at t=%.6f s", self.env.now)
                self.report.timeline.append((self.env.now, "overflow"))
                yield self.env.timeout(fill_time)
                self.report.records_in += half
                self.report.records_dropped += half
            occupancy = half * sum(self.busy)
            self.report.max_occupancy = max(self.report.max_occupancy, occupancy)

    def drain(self):
        while True:
            half_index = yield self.interrupts.get()
            yield self.env.timeout(self.model.drain_time_half)
            self.busy[half_index] = False
            self.report.records_drained += self.model.half
            self.report.timeline.append((self.env.now, f"drained:{half_index}"))


class _RequestSim:
    """simpy model of request-based transfer: the host pulls every period"""

    TICKS_PER_HALF = 8

    def __init__(self, env: simpy.Environment, model: BufferModel, report: BufferReport):
        self.env = env
        self.model = model
        self.report = report
        self.occupancy = 0.0
        env.process(self.produce())
        env.process(self.request())

    def produce(self):
        tick = self.model.half_fill_time / self.TICKS_PER_HALF
        per_tick = self.model.fill_rate * tick
        while True:
            yield self.env.timeout(tick)
            self.report.records_in += int(round(per_tick))
            self.occupancy += per_tick
            if self.occupancy > self.model.capacity:
                excess = self.occupancy - self.model.capacity
                self.report.records_dropped += int(round(excess))
                self.report.overflow_events += 1
                if self.report.first_overflow is None:
                    self.report.first_overflow = self.env.now
                    logger.info("request-mode overflow at t=%.6f s", self.env.now)
                self.occupancy = float(self.model.capacity)
            self.report.max_occupancy = max(self.report.max_occupancy, int(self.occupancy))

    def request(self):
        next_request = self.model.period
        while True:
            yield self.env.timeout(max(0.0, next_request - self.env.now))
            pending = self.occupancy
            self.report.timeline.append((self.env.now, "request"))
            yield self.env.timeout(self.model.drain_time_half * pending / self.model.half)
            self.occupancy -= pending
            self.report.records_drained += int(round(pending))
            next_request += self.model.period
            while next_request < self.env.now:
                next_request += self.model.period


def simulate_buffer(model: BufferModel, duration: float) -> BufferReport:
    """Discrete-event run of the acquisition memory for ``duration`` seconds"""
    errors = model.get_validation_errors()
    if errors or not duration > 0:
        raise StreamError(f"invalid buffer simulation: {'; '.join(errors) or 'duration <= 0'}")
    env = simpy.Environment()
    report = BufferReport(mode=model.mode.value, duration=duration, first_overflow=None,
                          overflow_events=0, records_in=0, records_drained=0,
                          records_dropped=0, max_occupancy=0)
    if model.mode is TransferMode.CONTINUOUS:
        _DoubleBufferSim(env, model, report)
    else:
        _RequestSim(env, model, report)
    env.run(until=duration)
    logger.debug("buffer simulation: %d interrupts, %d overflows", len(report.timeline),
                 report.overflow_events)
    return report
