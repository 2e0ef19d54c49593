"""Model loading and per-step probability capture.

Two loading paths share one serving interface.  ``builtin:tiny`` builds a
small seeded vision encoder-decoder from configs, with no download and no
training: its weights are random but fixed by the seed, its logits are
scaled to have real spread, and a constant bias on the EOS logit puts
greedy termination in a regime where decode length depends on the image.
Any other model string is treated as a Hugging Face id and loaded with
``from_pretrained`` together with its image processor and tokenizer.

Generation is always greedy with per-step score capture.  Probabilities
are a full-vocabulary softmax at temperature 1.0 in float64; the reported
top-k rows are the k largest entries, ties broken by ascending token id,
with no renormalization.  The EOS probability is read at the model's
designated end-of-sequence id (the first one, if the model declares
several).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from urllib.parse import parse_qsl, urlparse

import numpy as np
import torch
from PIL import Image

from .config import AdapterConfig
from .errors import AdapterConfigError

logger = logging.getLogger("model_adapter")

# Frozen defaults for the builtin model.  initializer_range well above the
# usual 0.02 gives the untrained logits enough spread that greedy decoding
# follows image-dependent paths instead of collapsing onto one token, and
# eos_bias puts termination mid-range instead of never/immediately.
BUILTIN_DEFAULTS = {
    "seed": 7,
    "init": 0.4,
    "eos_bias": 2.5,
    "vocab": 32,
    "image_size": 24,
    "patch": 8,
    "hidden": 32,
    "layers": 2,
    "heads": 2,
    # Part of the seeded weight draw: resizing the position table reorders
    # every later random tensor and changes the model.
    "positions": 96,
}
EOS_ID, PAD_ID, START_ID = 0, 1, 2


@dataclass(frozen=True)
class GenerationPayload:
    """One decode: per-position probabilities plus the emitted text."""

    eos_probs: np.ndarray
    topk_probs: np.ndarray
    text: str
    ended_via_eos: bool

    @property
    def length(self) -> int:
        return int(self.eos_probs.shape[0])


def extract_topk(probs: np.ndarray, k: int) -> np.ndarray:
    """The k largest probabilities per row, ties by ascending token id."""
    k = min(k, probs.shape[1])
    # Stable sort on the negated values keeps equal entries in original
    # (ascending id) order.
    order = np.argsort(-probs, axis=1, kind="stable")[:, :k]
    return np.take_along_axis(probs, order, axis=1)


class _EosBias(torch.nn.Module):
    """Logits processor adding a constant to the EOS logit."""

    def __init__(self, eos_id: int, bias: float):
        super().__init__()
        self.eos_id = eos_id
        self.bias = bias

    def __call__(self, input_ids, scores):
        scores = scores.clone()
        scores[:, self.eos_id] += self.bias
        return scores


class CaptioningModel:
    """A loaded model behind one ``generate`` call.

    Not thread-safe; the server serializes calls through a single worker
    lock.
    """

    def __init__(
        self,
        model,
        eos_id: int,
        preprocess,
        to_text,
        extra_processors=(),
        max_positions: int | None = None,
    ):
        self._model = model
        self._preprocess = preprocess
        self._to_text = to_text
        self._processors = list(extra_processors)
        self.eos_token_id = eos_id
        self.max_positions = max_positions

    def generate(self, image: np.ndarray, k: int, max_new_tokens: int) -> GenerationPayload:
        if self.max_positions is not None:
            max_new_tokens = min(max_new_tokens, self.max_positions)
        pixel_values = self._preprocess(image)
        kwargs = {}
        if self._processors:
            from transformers.generation import LogitsProcessorList

            kwargs["logits_processor"] = LogitsProcessorList(self._processors)
        with torch.no_grad():
            out = self._model.generate(
                pixel_values=pixel_values,
                max_new_tokens=max_new_tokens,
                do_sample=False,
                output_scores=True,
                return_dict_in_generate=True,
                **kwargs,
            )
        scores = torch.cat(list(out.scores), dim=0).double()
        probs = torch.softmax(scores, dim=-1).cpu().numpy()
        tokens = out.sequences[0, -probs.shape[0]:].tolist()
        return GenerationPayload(
            eos_probs=probs[:, self.eos_token_id].copy(),
            topk_probs=extract_topk(probs, k),
            text=self._to_text(tokens),
            ended_via_eos=tokens[-1] == self.eos_token_id,
        )


def _builtin_options(model_id: str) -> dict:
    parsed = urlparse(model_id)
    if parsed.path != "tiny":
        raise AdapterConfigError(f"unknown builtin model {parsed.path!r}")
    options = dict(BUILTIN_DEFAULTS)
    for key, value in parse_qsl(parsed.query, strict_parsing=bool(parsed.query)):
        if key not in options:
            raise AdapterConfigError(f"unknown builtin option {key!r}")
        options[key] = type(options[key])(value)
    return options


def _load_builtin(model_id: str, device: str) -> CaptioningModel:
    from transformers import (
        GPT2Config,
        ViTConfig,
        VisionEncoderDecoderConfig,
        VisionEncoderDecoderModel,
    )

    opts = _builtin_options(model_id)
    encoder = ViTConfig(
        image_size=opts["image_size"],
        patch_size=opts["patch"],
        num_channels=3,
        hidden_size=opts["hidden"],
        num_hidden_layers=opts["layers"],
        num_attention_heads=opts["heads"],
        intermediate_size=2 * opts["hidden"],
        initializer_range=opts["init"],
    )
    decoder = GPT2Config(
        vocab_size=opts["vocab"],
        n_positions=opts["positions"],
        n_embd=opts["hidden"],
        n_layer=opts["layers"],
        n_head=opts["heads"],
        add_cross_attention=True,
        bos_token_id=START_ID,
        eos_token_id=EOS_ID,
        pad_token_id=PAD_ID,
        initializer_range=opts["init"],
    )
    config = VisionEncoderDecoderConfig.from_encoder_decoder_configs(encoder, decoder)
    config.decoder_start_token_id = START_ID
    config.pad_token_id = PAD_ID
    config.eos_token_id = EOS_ID

    torch.manual_seed(opts["seed"])
    model = VisionEncoderDecoderModel(config=config)
    model.eval()
    # float64 end to end: the attack's finite-difference probes are small,
    # and float32 rounding would swallow them on a model this shallow.
    model = model.double().to(device)
    # Ops this small lose more to thread handoff than they gain.
    torch.set_num_threads(1)

    size = opts["image_size"]
    specials = {EOS_ID, PAD_ID, START_ID}

    def preprocess(image: np.ndarray) -> torch.Tensor:
        pil = Image.fromarray(image, mode="RGB").resize((size, size), Image.BILINEAR)
        arr = np.asarray(pil, dtype=np.float64) / 127.5 - 1.0
        return torch.from_numpy(arr.transpose(2, 0, 1)[None]).to(device)

    def to_text(tokens: list[int]) -> str:
        return " ".join(f"t{t}" for t in tokens if t not in specials)

    return CaptioningModel(
        model,
        eos_id=EOS_ID,
        preprocess=preprocess,
        to_text=to_text,
        extra_processors=[_EosBias(EOS_ID, opts["eos_bias"])],
        max_positions=opts["positions"] - 2,
    )


def _resolve_eos_id(model, tokenizer) -> int:
    candidates = [
        getattr(model.generation_config, "eos_token_id", None),
        getattr(model.config, "eos_token_id", None),
        getattr(tokenizer, "eos_token_id", None),
    ]
    for candidate in candidates:
        if candidate is None:
            continue
        if isinstance(candidate, (list, tuple)):
            if not candidate:
                continue
            if len(candidate) > 1:
                logger.info(
                    "model declares %d EOS ids %s; serving probabilities for id %d",
                    len(candidate), list(candidate), candidate[0],
                )
            return int(candidate[0])
        return int(candidate)
    raise AdapterConfigError("model declares no EOS token id")


def _load_pretrained(model_id: str, device: str) -> CaptioningModel:
    from transformers import AutoImageProcessor, AutoTokenizer, VisionEncoderDecoderModel

    try:
        model = VisionEncoderDecoderModel.from_pretrained(model_id)
        processor = AutoImageProcessor.from_pretrained(model_id)
        tokenizer = AutoTokenizer.from_pretrained(model_id)
    except Exception as exc:
        raise AdapterConfigError(f"cannot load model {model_id!r}: {exc}") from exc
    model.eval()
    model = model.to(device)
    eos_id = _resolve_eos_id(model, tokenizer)

    def preprocess(image: np.ndarray) -> torch.Tensor:
        pil = Image.fromarray(image, mode="RGB")
        return processor(images=pil, return_tensors="pt").pixel_values.to(device)

    def to_text(tokens: list[int]) -> str:
        return tokenizer.decode(tokens, skip_special_tokens=True).strip()

    return CaptioningModel(model, eos_id=eos_id, preprocess=preprocess, to_text=to_text)


def load_model(config: AdapterConfig) -> CaptioningModel:
    """Load the configured model; raises AdapterConfigError on failure."""
    if config.model.startswith("builtin:"):
        return _load_builtin(config.model, config.device)
    return _load_pretrained(config.model, config.device)
