"""Generator and segmentor: 2D U-Nets with four down/up-sampling stages.

Both networks share the encoder-decoder topology (3x3 convolutions, two per
level, rectifiers, max-pool down, bilinear up followed by a convolution, skip
connections by concatenation). They differ in the head and normalization:

- the generator has no normalization and predicts a correction in logit
  space: its output is sigmoid(logit(x) + head), so it starts as the identity
  map and synthetic images stay on the [0, 1] data scale;
- the segmentor applies instance normalization after every convolution (before
  the rectifier) and ends in a 2-channel softmax (healthy, lesion).
"""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .exceptions import CheckpointError, ShapeError, ValidationError
from .services.checkpoints import read_blob, write_blob

LEVELS = 4
DIVISOR = 2 ** LEVELS
LOGIT_EPS = 1e-4

GENERATOR = 'generator'
SEGMENTOR = 'segmentor'


def _conv_block(in_channels, out_channels, norm, norm_eps):
    layers = []
    for channels_in in (in_channels, out_channels):
        layers.append(nn.Conv2d(channels_in, out_channels, kernel_size=3, padding=1))
        if norm:
            layers.append(nn.InstanceNorm2d(out_channels, affine=True, eps=norm_eps))
        layers.append(nn.ReLU())
    return nn.Sequential(*layers)


class _Up(nn.Module):
    """Bilinear 2x upsampling followed by a 3x3 convolution."""

    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1)

    def forward(self, x):
        x = F.interpolate(x, scale_factor=2, mode='bilinear', align_corners=False)
        return self.conv(x)


class UNet(nn.Module):
    kind = None

    def __init__(self, base_width=16, in_channels=1, out_channels=1, norm=False,
                 norm_eps=1e-5):
        super().__init__()
        if base_width < 4:
            raise ValidationError(f'base_width must be >= 4, got {base_width}')
        self.base_width = base_width
        widths = [base_width * 2 ** level for level in range(LEVELS + 1)]

        self.encoders = nn.ModuleList()
        channels = in_channels
        for width in widths[:-1]:
            self.encoders.append(_conv_block(channels, width, norm, norm_eps))
            channels = width
        self.pool = nn.MaxPool2d(2)
        self.bottleneck = _conv_block(widths[-2], widths[-1], norm, norm_eps)

        self.ups = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for level in reversed(range(LEVELS)):
            self.ups.append(_Up(widths[level + 1], widths[level]))
            self.decoders.append(_conv_block(2 * widths[level], widths[level], norm, norm_eps))
        self.head = nn.Conv2d(widths[0], out_channels, kernel_size=1)

    def reset_parameters(self):
        """Fan-in scaled (He) normal weights, zero biases."""
        for module in self.modules():
            if isinstance(module, nn.Conv2d):
                nn.init.kaiming_normal_(module.weight, mode='fan_in', nonlinearity='relu')
                nn.init.zeros_(module.bias)
            elif isinstance(module, nn.InstanceNorm2d):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)

    def features(self, x):
        skips = []
        for encoder in self.encoders:
            x = encoder(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for up, decoder, skip in zip(self.ups, self.decoders, reversed(skips)):
            x = decoder(torch.cat([up(x), skip], dim=1))
        return self.head(x)


def _as_nchw(x):
    if x.dim() == 3:
        x = x.unsqueeze(1)
    if x.dim() != 4 or x.shape[1] != 1:
        raise ShapeError(f'expected (N, H, W) or (N, 1, H, W) images, got {tuple(x.shape)}')
    height, width = x.shape[-2:]
    if height % DIVISOR or width % DIVISOR:
        raise ShapeError(
            f'spatial size {height}x{width} is not divisible by {DIVISOR}',
            shape=[height, width],
        )
    return x


class GeneratorNet(UNet):
    kind = GENERATOR

    def __init__(self, base_width=16):
        super().__init__(base_width=base_width, out_channels=1, norm=False)

    def reset_parameters(self):
        super().reset_parameters()
        # Zero correction: the untrained generator is the identity map.
        nn.init.zeros_(self.head.weight)

    def forward(self, x):
        """Map images to synthetic images of the same shape in [0, 1]."""
        squeeze = x.dim() == 3
        x = _as_nchw(x)
        logits = torch.logit(x.clamp(LOGIT_EPS, 1 - LOGIT_EPS))
        out = torch.sigmoid(logits + self.features(x))
        return out.squeeze(1) if squeeze else out


class SegmentorNet(UNet):
    kind = SEGMENTOR

    def __init__(self, base_width=16, norm_eps=1e-5):
        super().__init__(base_width=base_width, out_channels=2, norm=True,
                         norm_eps=norm_eps)

    def forward(self, x):
        """Per-pixel (healthy, lesion) probabilities, shape (N, 2, H, W)."""
        return torch.softmax(self.features(_as_nchw(x)), dim=1)


_KINDS = {GENERATOR: GeneratorNet, SEGMENTOR: SegmentorNet}


def build(kind, base_width):
    try:
        return _KINDS[kind](base_width=base_width)
    except KeyError:
        raise ValidationError(f'unknown network kind {kind!r}') from None


def init_params(seed: int, base_width: int, kind: str, dtype=torch.float32):
    """A freshly initialized network; identical for equal (seed, width, kind)."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        net = build(kind, base_width)
        net.reset_parameters()
    return net.to(dtype)


def generator_forward(params: GeneratorNet, x: torch.Tensor) -> torch.Tensor:
    return params(x)


def segmentor_forward(params: SegmentorNet, x: torch.Tensor) -> torch.Tensor:
    return params(x)


def count_params(params: nn.Module) -> int:
    return sum(p.numel() for p in params.parameters())


def dtype_name(dtype) -> str:
    return {torch.float32: 'float32', torch.float64: 'float64'}[dtype]


def torch_dtype(precision) -> torch.dtype:
    if precision in (64, 'float64'):
        return torch.float64
    return torch.float32


def named_arrays(params: nn.Module, prefix=''):
    for name, tensor in params.state_dict().items():
        yield prefix + name, tensor.detach().cpu().numpy()


def export_params(params: UNet, path, seed: int, **meta):
    """Write one network as a ``kind``-tagged blob + manifest."""
    dtype = dtype_name(next(params.parameters()).dtype)
    return write_blob(path, named_arrays(params), kind=params.kind, dtype=dtype,
                      base_width=params.base_width, seed=seed, **meta)


def load_params(path, kind: str, device='cpu'):
    """Load a ``kind`` network from its own blob or from a training checkpoint."""
    manifest, arrays = read_blob(path, expected_kind=(kind, 'train_state'))
    if manifest['kind'] == 'train_state':
        prefix = kind + '/'
        arrays = {name[len(prefix):]: a for name, a in arrays.items()
                  if name.startswith(prefix)}
    net = build(kind, manifest['base_width']).to(torch_dtype(manifest['dtype']))
    state = {name: torch.from_numpy(array) for name, array in arrays.items()}
    try:
        net.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f'checkpoint {path} does not fit a {kind}: {exc}') from exc
    return net.to(device), manifest
