"""
Parallel warp-pair generation.

Worker threads render training pairs into a bounded queue while the training
loop, the only writer of the parameters, consumes them. Each worker draws
from its own generator spawned from one SeedSequence. Pair order depends on
thread scheduling, so runs with more than one worker are not reproducible.
"""

from __future__ import annotations

import logging
import queue
import threading
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from geostable.config import PhotometricConfig, WarpConfig
from geostable.exceptions import GeostableError
from geostable.geometry.imaging import ImageArray
from geostable.geometry.pairs import WarpPairSample, make_warp_pair

logger = logging.getLogger(__name__)

_POLL_SECONDS = 0.1


@dataclass(frozen=True, eq=False)
class TrainingPair:
    """Two rendered views and their geometry."""
    x_a: ImageArray
    x_b: ImageArray
    sample: WarpPairSample


def render_training_pair(
    image: ImageArray,
    rng: np.random.Generator,
    warp: WarpConfig,
    photometric: PhotometricConfig,
    image_size: int,
) -> TrainingPair:
    x_a, x_b, sample = make_warp_pair(image, rng, warp, photometric, (image_size, image_size))
    return TrainingPair(x_a, x_b, sample)


class PairProducer:
    """Threads turning image indices into training pairs.

    Usage::

        with PairProducer(images, order, ...) as producer:
            pair = producer.get()
    """

    def __init__(
        self,
        images: Sequence[ImageArray],
        warp: WarpConfig,
        photometric: PhotometricConfig,
        image_size: int,
        num_workers: int,
        queue_size: int,
        seed: int,
    ) -> None:
        if num_workers < 1:
            raise ValueError(f"num_workers must be >= 1, got {num_workers}")
        self.images = images
        self.warp = warp
        self.photometric = photometric
        self.image_size = image_size
        self.tasks: "queue.Queue[Optional[int]]" = queue.Queue()
        self.results: "queue.Queue[TrainingPair | BaseException]" = queue.Queue(maxsize=queue_size)
        self._stop = threading.Event()
        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(num_workers)]
        self._threads: List[threading.Thread] = [
            threading.Thread(target=self._work, args=(rng,), name=f"pair-worker-{i}", daemon=True)
            for i, rng in enumerate(rngs)
        ]

    def submit(self, indices: Sequence[int]) -> None:
        for index in indices:
            self.tasks.put(int(index))

    def _work(self, rng: np.random.Generator) -> None:
        while not self._stop.is_set():
            try:
                index = self.tasks.get(timeout=_POLL_SECONDS)
            except queue.Empty:
                continue
            if index is None:
                return
            try:
                item: TrainingPair | BaseException = render_training_pair(
                    self.images[index], rng, self.warp, self.photometric, self.image_size
                )
            except Exception as e:
                logger.debug("Worker failed on image %d: %s", index, e)
                item = e
            while not self._stop.is_set():
                try:
                    self.results.put(item, timeout=_POLL_SECONDS)
                    break
                except queue.Full:
                    continue

    def get(self) -> TrainingPair:
        """Next rendered pair; errors raised in a worker are re-raised here.

        Raises:
            GeostableError: If every worker has exited with nothing left to deliver
        """
        while True:
            try:
                item = self.results.get(timeout=_POLL_SECONDS)
                break
            except queue.Empty:
                if not any(thread.is_alive() for thread in self._threads):
                    raise GeostableError("All pair workers have exited") from None
        if isinstance(item, BaseException):
            raise item
        return item

    def start(self) -> "PairProducer":
        for thread in self._threads:
            thread.start()
        logger.warning(
            "Generating pairs with %d workers; pair order is not reproducible", len(self._threads)
        )
        return self

    def close(self) -> None:
        self._stop.set()
        for _ in self._threads:
            self.tasks.put(None)
        for thread in self._threads:
            thread.join(timeout=5.0)

    def __enter__(self) -> "PairProducer":
        return self.start()

    def __exit__(self, *exc: object) -> None:
        self.close()
