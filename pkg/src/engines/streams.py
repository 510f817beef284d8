"""
Draw Streams - conditionally i.i.d. sources of bootstrap statistics

A stream is consumed sequentially but generated in fixed blocks: draw i
comes from sub-stream seed/(i // BLOCK_SIZE) at offset i % BLOCK_SIZE, so
its value depends only on (seed, i) and never on how the stream was read.
"""

import logging
from typing import Optional

import numpy as np

from src.engines.scenarios import model_for
from src.errors import DomainError
from src.models.scenario import FittedModel
from src.models.seeds import PREPASS_STREAM, SeedSpec


logger = logging.getLogger(__name__)

BLOCK_SIZE = 256


class DrawSource:
    """Sequential reader over fixed-size generated blocks"""

    def __init__(self, seed: SeedSpec):
        self.seed = seed
        self._position = 0
        self._block_index = -1
        self._block: Optional[np.ndarray] = None

    def _generate_block(self, index: int) -> np.ndarray:
        raise NotImplementedError

    def _load(self, index: int) -> np.ndarray:
        if index != self._block_index:
            self._block = np.asarray(self._generate_block(index), dtype=float)
            self._block_index = index
        return self._block

    def draw(self) -> float:
        """Next element of the stream"""
        return float(self.take(1)[0])

    def take(self, count: int) -> np.ndarray:
        """Next count elements of the stream"""
        if count < 0:
            raise DomainError(f"count must be non-negative, got {count}")
        out = np.empty(count)
        filled = 0
        while filled < count:
            index, offset = divmod(self._position, BLOCK_SIZE)
            block = self._load(index)
            n = min(BLOCK_SIZE - offset, count - filled)
            out[filled:filled + n] = block[offset:offset + n]
            filled += n
            self._position += n
        return out

    def reset(self) -> None:
        self._position = 0

    @property
    def position(self) -> int:
        return self._position

    def prepass_source(self) -> "DrawSource":
        """Independent source for standardization moments, shared by all tests on one model"""
        raise NotImplementedError

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_block"] = None
        state["_block_index"] = -1
        return state


class BootstrapDrawStream(DrawSource):
    """Bootstrap statistics T*_n:i of one fitted model"""

    def __init__(self, fitted: FittedModel, seed: SeedSpec):
        fitted.require_regular()
        super().__init__(seed)
        self.fitted = fitted
        self._model = model_for(fitted.scenario.variant)

    def _generate_block(self, index: int) -> np.ndarray:
        rng = self.seed.child(index).generator()
        return self._model.draws(self.fitted, rng, BLOCK_SIZE)

    def prepass_source(self) -> "BootstrapDrawStream":
        # seeded by the data, so every stream over this dataset shares the standardizers
        key = int(self.fitted.data_digest[:15], 16)
        return BootstrapDrawStream(
            self.fitted, SeedSpec(self.seed.master_seed, (PREPASS_STREAM, key))
        )

    def __repr__(self) -> str:
        return f"BootstrapDrawStream({self.fitted.scenario.label}, seed={self.seed})"


class DirectNormalSource(DrawSource):
    """Exact N(0,1) draws: a calibration stream with no model in between"""

    def _generate_block(self, index: int) -> np.ndarray:
        return self.seed.child(index).generator().standard_normal(BLOCK_SIZE)

    def prepass_source(self) -> "DirectNormalSource":
        return DirectNormalSource(SeedSpec(self.seed.master_seed, (PREPASS_STREAM,)))

    def __repr__(self) -> str:
        return f"DirectNormalSource(seed={self.seed})"


class ArraySource(DrawSource):
    """Fixed, precomputed draws read in order"""

    def __init__(self, values, label: str = "array"):
        super().__init__(SeedSpec(0))
        self.values = np.asarray(values, dtype=float)
        self.label = label

    def take(self, count: int) -> np.ndarray:
        if count < 0:
            raise DomainError(f"count must be non-negative, got {count}")
        end = self._position + count
        if end > self.values.size:
            raise DomainError(
                f"{self.label}: requested {count} draws, {self.values.size - self._position} left"
            )
        out = self.values[self._position:end].copy()
        self._position = end
        return out

    def prepass_source(self) -> "DrawSource":
        raise DomainError(f"{self.label}: precomputed draws carry no prepass stream")

    def __repr__(self) -> str:
        return f"ArraySource({self.label}, B={self.values.size})"


def bootstrap_draw(stream: DrawSource) -> float:
    """Next draw of a stream"""
    return stream.draw()
