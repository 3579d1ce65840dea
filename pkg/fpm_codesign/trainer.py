"""Joint training of the LED intensities and the reconstruction networks

Every iteration draws a batch of objects, simulates their noisy low-resolution images
under the current LED pattern, and reconstructs the objects. The discriminator is
updated first on the detached reconstruction; then the reconstruction networks and
(if trainable) the LED intensities are updated to minimize ``J = M + alpha G + C``.
"""
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union
from pathlib import Path
import logging
import math
import csv
import os

import numpy as np

from fpm_codesign import tensor as T
from fpm_codesign.channel import make_rng, noisy_intensity, NoiseSpec
from fpm_codesign.dataset import ComplexDataset
from fpm_codesign.exceptions import ConstraintError, ContractError, DivergenceError, ShapeError
from fpm_codesign.network import (ConvNetSpec, DiscriminatorSpec, build_discriminator,
                                  build_reconstructor, load_checkpoint, save_checkpoint)
from fpm_codesign.objective import ALPHA, LossReport, combined_loss, loss_D, loss_G, loss_M
from fpm_codesign.optics import OpticalConfig, batch_jacobian
from fpm_codesign.version import __version__

logger = logging.getLogger(__name__)

STREAMS = ('led_init', 'param_init', 'batch', 'noise', 'dropout')
LED_INITS = ('uniform_one', 'seeded_uniform_random')


@dataclass(frozen=True)
class TrainSchedule:
    """Optimization settings

    Args:
        iterations (int): Number of training iterations
        batch_size (int): Objects per iteration
        lr0 (float): Initial learning rate
        lr_decay (float): Factor applied to the learning rate every ``decay_steps``
        decay_steps (int): Iterations between learning-rate decays
        init_stddev (float): Standard deviation of the truncated normal initializer
        ema_decay (float): Decay of the parameter moving average
        adam_beta1 (float): Decay of Adam's first-moment estimate
        adam_beta2 (float): Decay of Adam's second-moment estimate
        adam_epsilon (float): Adam's denominator offset
        alpha (float): Weight of the gradient loss
        adversarial (bool): Train the discriminator and include its loss in ``J``
        log_interval (int): Iterations between progress messages
        snapshot_interval (int): Iterations between LED-pattern rows and checkpoints
    """

    iterations: int = 5000
    batch_size: int = 4
    lr0: float = 1e-2
    lr_decay: float = 0.99
    decay_steps: int = 1000
    init_stddev: float = 0.1
    ema_decay: float = 0.999
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    alpha: float = ALPHA
    adversarial: bool = True
    log_interval: int = 100
    snapshot_interval: int = 1000

    def __post_init__(self):
        if self.iterations < 0:
            raise ConstraintError(f'Iterations must be non-negative, got {self.iterations}')
        for key in ['batch_size', 'lr0', 'decay_steps', 'init_stddev', 'adam_epsilon',
                    'log_interval', 'snapshot_interval']:
            if not getattr(self, key) > 0:
                raise ConstraintError(f'{key} must be positive, got {getattr(self, key)}')
        for key in ['lr_decay', 'ema_decay', 'adam_beta1', 'adam_beta2']:
            if not 0 < getattr(self, key) < 1:
                raise ConstraintError(f'{key} must lie in (0, 1), got {getattr(self, key)}')
        if self.alpha < 0:
            raise ConstraintError(f'alpha must be non-negative, got {self.alpha}')

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> 'TrainSchedule':
        return cls(**data)


@dataclass(frozen=True)
class CaseSpec:
    """How the LED intensities start and whether they are trained

    Args:
        case_id (int): Experimental case, 1-4
        led_init (str): ``uniform_one`` or ``seeded_uniform_random``
        led_trainable (bool): Whether the intensities are optimized
    """

    case_id: int
    led_init: str
    led_trainable: bool

    def __post_init__(self):
        if self.led_init not in LED_INITS:
            raise ConstraintError(f'Unknown LED initialization "{self.led_init}"')

    @classmethod
    def from_id(cls, case_id: int) -> 'CaseSpec':
        """Case 1: uniform, fixed. 2: uniform, trained. 3: random, fixed. 4: random, trained"""
        if case_id not in CASES:
            raise ContractError(f'Case must be one of 1, 2, 3 or 4, got {case_id}')
        return CASES[case_id]

    def to_dict(self) -> dict:
        return asdict(self)


CASES = {
    1: CaseSpec(1, 'uniform_one', False),
    2: CaseSpec(2, 'uniform_one', True),
    3: CaseSpec(3, 'seeded_uniform_random', False),
    4: CaseSpec(4, 'seeded_uniform_random', True),
}


def spawn_streams(seed: int) -> Dict[str, np.random.Generator]:
    """Independent random streams for each stochastic part of a run"""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return OrderedDict((name, make_rng(child)) for name, child in zip(STREAMS, children))


def initial_led_weights(case: CaseSpec, n_leds: int, rng: np.random.Generator) -> np.ndarray:
    """Starting LED intensities of a case

    Cases sharing an initialization and a stream (3 and 4) start from the same draw.
    """
    if case.led_init == 'uniform_one':
        return np.ones(n_leds)
    return rng.uniform(0.0, 1.0, size=n_leds)


@dataclass
class AdamState:
    """Moment estimates of the Adam optimizer"""

    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0

    @classmethod
    def create(cls, params: Sequence[np.ndarray]) -> 'AdamState':
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              epsilon: float = 1e-8) -> Tuple[List[np.ndarray], AdamState]:
    """One bias-corrected Adam update

    Args:
        params ([ndarray]): Current values
        grads ([ndarray]): Gradients of the loss, same shapes as ``params``
        state (AdamState): Moment estimates from the previous steps
        lr (float): Learning rate
    Returns:
        - ([ndarray]) Updated values
        - (AdamState) Updated moment estimates
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(f'Got {len(params)} parameters, {len(grads)} gradients and'
                         f' {len(state.m)} moment estimates')
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ShapeError(f'Gradient {i} has shape {g.shape}, parameter has {p.shape}')
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f'Non-finite gradient for parameter {i} at step {state.t + 1}')

    t = state.t + 1
    new_m, new_v, new_params = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + epsilon))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v, t)


def project_led(weights: np.ndarray) -> np.ndarray:
    """Clamp LED intensities to [0, 1]"""
    return np.clip(weights, 0.0, 1.0)


def learning_rate(schedule: TrainSchedule, iteration: int) -> float:
    """Learning rate decayed in steps of ``schedule.decay_steps`` iterations"""
    return schedule.lr0 * schedule.lr_decay ** (iteration // schedule.decay_steps)


class ExponentialMovingAverage:
    """Running average of named arrays

    The decay ramps up as ``min(decay, (1 + t) / (10 + t))`` with the update count ``t``,
    so that the average is not dominated by the initial values early in training.

    Args:
        values (dict): Initial values
        decay (float): Final decay rate
    """

    def __init__(self, values: Dict[str, np.ndarray], decay: float = 0.999):
        self.decay = decay
        self.num_updates = 0
        self._shadow = OrderedDict((k, np.array(v, dtype=np.float64)) for k, v in values.items())

    def update(self, values: Dict[str, np.ndarray]) -> float:
        """Move the average toward new values

        Returns:
            (float) Decay used for this update
        """
        t = self.num_updates
        decay = min(self.decay, (1.0 + t) / (10.0 + t))
        for k, shadow in self._shadow.items():
            shadow -= (1 - decay) * (shadow - values[k])
        self.num_updates += 1
        return decay

    def values(self) -> Dict[str, np.ndarray]:
        """Copies of the averaged arrays"""
        return OrderedDict((k, v.copy()) for k, v in self._shadow.items())

    def restore(self, values: Dict[str, np.ndarray], num_updates: int):
        """Reset the averages to values saved with :meth:`values`"""
        for k in self._shadow:
            self._shadow[k] = np.array(values[k], dtype=np.float64)
        self.num_updates = num_updates


class CodesignModel:
    """LED intensities, two reconstruction branches and a discriminator

    Args:
        config (OpticalConfig): Microscope
        net_spec (ConvNetSpec): Architecture of each reconstruction branch
        disc_spec (DiscriminatorSpec): Architecture of the discriminator
        led_weights (ndarray): Initial LED intensities
        rng (Generator): Stream for the initial network parameters
        led_trainable (bool): Whether the LED intensities receive gradients
        init_stddev (float): Standard deviation of the initial network parameters
    """

    def __init__(self, config: OpticalConfig, net_spec: ConvNetSpec,
                 disc_spec: DiscriminatorSpec, led_weights: np.ndarray,
                 rng: np.random.Generator, led_trainable: bool = True, init_stddev: float = 0.1):
        led_weights = np.asarray(led_weights, dtype=np.float64)
        if led_weights.shape != (config.n_active,):
            raise ShapeError(f'Expected {config.n_active} LED intensities, got {led_weights.shape}')
        if net_spec.upsample != config.downsample:
            raise ShapeError(f'Network upsamples by {net_spec.upsample}, but {config.name}'
                             f' downsamples by {config.downsample}')
        self.config = config
        self.net_spec = net_spec
        self.disc_spec = disc_spec
        self.led_trainable = led_trainable
        self.led = T.Tensor(led_weights, requires_grad=led_trainable, name='led.weights')
        self.real = build_reconstructor(net_spec, config.lowres_shape, config.highres_shape,
                                        rng, 'real', init_stddev)
        self.imag = build_reconstructor(net_spec, config.lowres_shape, config.highres_shape,
                                        rng, 'imag', init_stddev)
        self.disc = build_discriminator(disc_spec, config.highres_shape, rng, init_stddev)

    def generator_parameters(self) -> Dict[str, T.Tensor]:
        """Parameters minimized with ``J``: both branches, and the LEDs if trainable"""
        output = OrderedDict(self.real.parameters())
        output.update(self.imag.parameters())
        if self.led_trainable:
            output['led.weights'] = self.led
        return output

    @property
    def parameter_count(self) -> int:
        """Trainable values of the two reconstruction branches"""
        return self.real.parameter_count + self.imag.parameter_count

    def measure(self, objects: np.ndarray, m: float,
                rng: Optional[np.random.Generator]) -> Tuple[T.Tensor, T.Tensor]:
        """Simulate the recorded images of a batch of objects

        Args:
            objects (ndarray): Complex objects, shape (B, N, N)
            m (float): Noise factor, ``inf`` for noiseless images
            rng (Generator): Stream for the noise draws (unused if noiseless)
        Returns:
            - (Tensor) Clean images, shape (B, n, n)
            - (Tensor) Noisy images, shape (B, 1, n, n)
        """
        jacobian = T.Tensor(batch_jacobian(objects, self.config))
        n = self.config.lowres_pixels
        clean = (jacobian @ self.led).reshape(len(objects), n, n)
        if math.isinf(m):
            g = np.zeros(clean.shape)
        else:
            g = rng.standard_normal(clean.shape)
        noisy = noisy_intensity(clean, m, g)
        return clean, noisy.reshape(len(objects), 1, n, n)

    def reconstruct(self, images: T.Tensor, training: bool = False,
                    rng: Optional[np.random.Generator] = None) -> T.Tensor:
        """Complex fields as (B, 2, H, W) real and imaginary channels"""
        return T.concat([self.real(images, training, rng), self.imag(images, training, rng)],
                        axis=1)

    def state_dict(self) -> Dict[str, np.ndarray]:
        output = OrderedDict()
        for network in (self.real, self.imag, self.disc):
            output.update(network.state_dict())
        output['led.weights'] = self.led.data.copy()
        return output

    def load_state_dict(self, arrays: Dict[str, np.ndarray]):
        for network in (self.real, self.imag, self.disc):
            network.load_state_dict(arrays)
        if arrays['led.weights'].shape != self.led.shape:
            raise ShapeError(f'Checkpoint has {arrays["led.weights"].shape} LED intensities,'
                             f' expected {self.led.shape}')
        self.led.data = np.array(arrays['led.weights'], dtype=np.float64)

    def ema_targets(self) -> Dict[str, np.ndarray]:
        """Values tracked by the moving average: both branches and the LED intensities"""
        output = OrderedDict((k, p.data) for k, p in self.real.parameters().items())
        output.update((k, p.data) for k, p in self.imag.parameters().items())
        output['led.weights'] = self.led.data
        return output


def objects_to_tensor(objects: np.ndarray) -> T.Tensor:
    """(B, N, N) complex objects as a (B, 2, N, N) tensor"""
    return T.Tensor(np.stack([objects.real, objects.imag], axis=1))


@dataclass
class TrainResult:
    """Outcome of a training run

    Args:
        model (CodesignModel): Model holding the final training values
        ema (ExponentialMovingAverage): Averaged values of the generator and LEDs
        history ([LossReport]): One entry per iteration
        led_history ([(int, ndarray)]): LED intensities at each snapshot
        checkpoint (str): Path to the final checkpoint, if written
    """

    model: CodesignModel
    ema: ExponentialMovingAverage
    history: List[LossReport] = field(default_factory=list)
    led_history: List[Tuple[int, np.ndarray]] = field(default_factory=list)
    checkpoint: Optional[str] = None


def _checkpoint_header(model: CodesignModel, case: CaseSpec, schedule: TrainSchedule,
                       ema: ExponentialMovingAverage, iteration: int, seed: int, m: float,
                       dataset: ComplexDataset) -> dict:
    return {
        'version': __version__,
        'case': case.to_dict(),
        'preset': model.config.to_dict(),
        'network': model.net_spec.to_dict(),
        'discriminator': model.disc_spec.to_dict(),
        'schedule': schedule.to_dict(),
        'iteration': iteration,
        'ema_decay': schedule.ema_decay,
        'ema_updates': ema.num_updates,
        'parameter_count': model.parameter_count,
        'low_res_shape': list(model.config.lowres_shape),
        'high_res_shape': list(model.config.highres_shape),
        'seed': seed,
        'm': 'inf' if math.isinf(m) else m,
        'dataset': {'provenance': dataset.provenance, 'preset': dataset.preset,
                    'encoder': dataset.encoder, 'splits': dict(dataset.split_sizes)},
    }


def write_training_checkpoint(path: Union[str, Path], result: TrainResult, case: CaseSpec,
                              schedule: TrainSchedule, iteration: int, seed: int, m: float,
                              dataset: ComplexDataset):
    """Save the training values, their moving averages and the batch-norm statistics"""
    arrays = result.model.state_dict()
    for name, values in result.ema.values().items():
        arrays[f'ema.{name}'] = values
    header = _checkpoint_header(result.model, case, schedule, result.ema, iteration, seed, m,
                                dataset)
    save_checkpoint(path, header, arrays)


def load_model(path: Union[str, Path], use_ema: bool = True) -> Tuple[CodesignModel, dict]:
    """Rebuild a model from a checkpoint

    Args:
        path: Checkpoint written during training
        use_ema (bool): Load the moving averages instead of the final training values
    Returns:
        - (CodesignModel) Restored model
        - (dict) Checkpoint header
    """
    header, arrays = load_checkpoint(path)
    config = OpticalConfig.from_dict(header['preset'])
    model = CodesignModel(config, ConvNetSpec.from_dict(header['network']),
                          DiscriminatorSpec.from_dict(header['discriminator']),
                          arrays['led.weights'], make_rng(0), led_trainable=False)
    if model.parameter_count != header['parameter_count']:
        raise ShapeError(f'{path} records {header["parameter_count"]} parameters,'
                         f' its architecture has {model.parameter_count}')
    state = OrderedDict(arrays)
    if use_ema:
        for name in model.ema_targets():
            state[name] = arrays[f'ema.{name}']
    model.load_state_dict(state)
    return model, header


def train(case: CaseSpec, dataset: ComplexDataset, config: OpticalConfig, m: float,
          schedule: TrainSchedule, seed: int, out_dir: Optional[Union[str, Path]] = None,
          net_spec: Optional[ConvNetSpec] = None, disc_spec: Optional[DiscriminatorSpec] = None,
          callback: Optional[Callable[[int, CodesignModel], None]] = None) -> TrainResult:
    """Jointly optimize the LED pattern and the reconstruction networks

    Args:
        case (CaseSpec): LED initialization and trainability
        dataset (ComplexDataset): Objects; batches are drawn from the training split
        config (OpticalConfig): Microscope
        m (float): Noise factor, ``inf`` for noiseless training
        schedule (TrainSchedule): Optimization settings
        seed (int): Seed of all random streams
        out_dir: Directory for ``losses.csv``, ``led_pattern.csv`` and ``checkpoints/``.
            Nothing is written if not provided
        net_spec (ConvNetSpec): Reconstruction architecture. Defaults to the standard
            eight-layer network for the preset's downsampling factor
        disc_spec (DiscriminatorSpec): Discriminator architecture
        callback: Called with the iteration count and the model after every iteration
    Returns:
        (TrainResult) Final model, moving averages and loss history
    """
    NoiseSpec(m)
    train_objects = dataset.split('train')
    if len(train_objects) == 0:
        raise ContractError('The training split is empty')
    if tuple(dataset.shape) != config.highres_shape:
        raise ShapeError(f'Dataset objects are {dataset.shape}, but {config.name} uses'
                         f' {config.highres_shape}')
    if dataset.preset != config.name:
        logger.warning(f'Dataset was band-limited for {dataset.preset}, training with'
                       f' {config.name}')
    if net_spec is None:
        net_spec = ConvNetSpec(upsample=config.downsample)
    if disc_spec is None:
        disc_spec = DiscriminatorSpec()

    streams = spawn_streams(seed)
    led_init = initial_led_weights(case, config.n_active, streams['led_init'])
    model = CodesignModel(config, net_spec, disc_spec, led_init, streams['param_init'],
                          case.led_trainable, schedule.init_stddev)
    ema = ExponentialMovingAverage(model.ema_targets(), schedule.ema_decay)
    result = TrainResult(model, ema)
    last_finite = (0, model.state_dict(), ema.values(), ema.num_updates)

    gen_params = list(model.generator_parameters().values())
    disc_params = list(model.disc.parameters().values())
    gen_adam = AdamState.create([p.data for p in gen_params])
    disc_adam = AdamState.create([p.data for p in disc_params])
    adam_kwargs = dict(beta1=schedule.adam_beta1, beta2=schedule.adam_beta2,
                       epsilon=schedule.adam_epsilon)

    losses_fp = led_fp = None
    checkpoint_dir = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        checkpoint_dir = out_dir / 'checkpoints'
        os.makedirs(checkpoint_dir, exist_ok=True)
        losses_fp = open(out_dir / 'losses.csv', 'w', newline='')
        led_fp = open(out_dir / 'led_pattern.csv', 'w', newline='')
    losses_writer = csv.writer(losses_fp, lineterminator='\n') if losses_fp else None
    led_writer = csv.writer(led_fp, lineterminator='\n') if led_fp else None
    if losses_writer:
        losses_writer.writerow(LossReport.csv_header())
    if led_writer:
        led_writer.writerow(['iteration'] + [f'led_{i}' for i in range(config.n_active)])

    def snapshot(iteration: int):
        weights = model.led.data.copy()
        result.led_history.append((iteration, weights))
        if led_writer:
            led_writer.writerow([str(iteration)] + [repr(float(w)) for w in weights])
        if checkpoint_dir is not None and iteration > 0:
            write_training_checkpoint(checkpoint_dir / f'iter_{iteration:07d}.fpmc', result,
                                      case, schedule, iteration, seed, m, dataset)

    logger.info(f'Training case {case.case_id} on {len(train_objects)} objects with'
                f' {config.name}, m={m}, {schedule.iterations} iterations,'
                f' {model.parameter_count} network parameters')
    try:
        snapshot(0)
        for t in range(schedule.iterations):
            batch = train_objects[streams['batch'].integers(0, len(train_objects),
                                                            schedule.batch_size)]
            actual = objects_to_tensor(batch)
            _, noisy = model.measure(batch, m, streams['noise'])
            pred = model.reconstruct(noisy, training=True, rng=streams['dropout'])

            logits = None
            if schedule.adversarial:
                d_loss = loss_D(model.disc(pred.detach()), model.disc(actual))
                grads = T.backward(T.Graph(d_loss), d_loss, disc_params)
                new_values, disc_adam = adam_step([p.data for p in disc_params], grads,
                                                  disc_adam, learning_rate(schedule, t),
                                                  **adam_kwargs)
                for p, v in zip(disc_params, new_values):
                    p.data = v
                logits = model.disc(pred)

            j, report = combined_loss(pred, actual, logits, schedule.alpha, iteration=t + 1)
            if not np.isfinite(report.J):
                raise DivergenceError(f'Loss became non-finite at iteration {t + 1}: {report}')
            grads = T.backward(T.Graph(j), j, gen_params)
            new_values, gen_adam = adam_step([p.data for p in gen_params], grads, gen_adam,
                                             learning_rate(schedule, t), **adam_kwargs)
            for p, v in zip(gen_params, new_values):
                p.data = v
            if case.led_trainable:
                model.led.data = project_led(model.led.data)
            ema.update(model.ema_targets())

            result.history.append(report)
            if losses_writer:
                losses_writer.writerow(report.csv_row())
            if (t + 1) % schedule.log_interval == 0:
                logger.info(f'Iteration {t + 1}: M={report.M:.4g} G={report.G:.4g}'
                            f' C={report.C:.4g} J={report.J:.4g}')
            if (t + 1) % schedule.snapshot_interval == 0:
                snapshot(t + 1)
            if callback is not None:
                callback(t + 1, model)
            state, averages = model.state_dict(), ema.values()
            values = list(state.values()) + list(averages.values())
            if all(np.all(np.isfinite(v)) for v in values):
                last_finite = (t + 1, state, averages, ema.num_updates)

        if schedule.iterations % schedule.snapshot_interval != 0:
            snapshot(schedule.iterations)
        if checkpoint_dir is not None:
            final = checkpoint_dir / 'final.fpmc'
            write_training_checkpoint(final, result, case, schedule, schedule.iterations,
                                      seed, m, dataset)
            result.checkpoint = str(final)
    except DivergenceError as e:
        logger.warning(f'Training diverged: {e}')
        last, state, averages, updates = last_finite
        model.load_state_dict(state)
        ema.restore(averages, updates)
        if checkpoint_dir is not None:
            write_training_checkpoint(checkpoint_dir / 'last_finite.fpmc', result, case,
                                      schedule, last, seed, m, dataset)
            logger.warning(f'Saved the state after iteration {last} to'
                           f' {checkpoint_dir / "last_finite.fpmc"}')
        raise
    finally:
        for fp in (losses_fp, led_fp):
            if fp is not None:
                fp.close()
    return result


@dataclass
class EvalResult:
    """Reconstruction errors over one split

    Args:
        m (float): Noise factor
        split (str): Split evaluated
        per_image_M (ndarray): Mean-squared error of each object
        per_image_G (ndarray): Gradient error of each object
    """

    m: float
    split: str
    per_image_M: np.ndarray
    per_image_G: np.ndarray

    @property
    def mean_M(self) -> float:
        return float(np.mean(self.per_image_M))

    @property
    def mean_G(self) -> float:
        return float(np.mean(self.per_image_G))

    @property
    def count(self) -> int:
        return len(self.per_image_M)

    @staticmethod
    def csv_header() -> List[str]:
        return ['m', 'split', 'mean_M', 'mean_G', 'count']

    def csv_row(self) -> List[str]:
        return [repr(float(self.m)), self.split, repr(self.mean_M), repr(self.mean_G),
                str(self.count)]


def evaluate(model: Union[CodesignModel, str, Path], dataset: ComplexDataset, m: float,
             split: str = 'test', seed: int = 0, rng: Optional[np.random.Generator] = None,
             batch_size: int = 64, samples: Optional[int] = None) -> EvalResult:
    """Average reconstruction errors of a trained model

    Uses the moving-average parameters (when given a checkpoint path), the batch-norm
    running statistics, no dropout, and fresh noise for every image.

    Args:
        model: Model or path to a checkpoint
        dataset (ComplexDataset): Objects to reconstruct
        m (float): Noise factor, ``inf`` for noiseless images
        split (str): Split to evaluate
        seed (int): Seed of the noise stream, used if ``rng`` is not provided
        rng (Generator): Noise stream
        batch_size (int): Objects reconstructed at a time
        samples (int): Evaluate only the first ``samples`` objects of the split
    Returns:
        (EvalResult) Per-image and mean errors
    """
    NoiseSpec(m)
    if not isinstance(model, CodesignModel):
        model, _ = load_model(model, use_ema=True)
    objects = dataset.split(split)
    if samples is not None:
        objects = objects[:samples]
    if len(objects) == 0:
        raise ContractError(f'The {split} split is empty')
    if tuple(dataset.shape) != model.config.highres_shape:
        raise ShapeError(f'Checkpoint expects {model.config.highres_shape} objects,'
                         f' dataset has {dataset.shape}')
    if rng is None:
        rng = make_rng(seed)

    per_m, per_g = [], []
    for start in range(0, len(objects), batch_size):
        batch = objects[start:start + batch_size]
        actual = objects_to_tensor(batch)
        _, noisy = model.measure(batch, m, rng)
        pred = model.reconstruct(noisy.detach(), training=False)
        for i in range(len(batch)):
            p, a = T.Tensor(pred.data[i]), T.Tensor(actual.data[i])
            per_m.append(loss_M(p, a).item())
            per_g.append(loss_G(p, a).item())
    return EvalResult(m, split, np.array(per_m), np.array(per_g))


def read_led_history(path: Union[str, Path]) -> List[Tuple[int, np.ndarray]]:
    """Read the LED intensities recorded in a ``led_pattern.csv`` file

    Returns:
        ([(int, ndarray)]) Iteration and intensities of each snapshot
    """
    output = []
    with open(path, newline='') as fp:
        reader = csv.reader(fp)
        header = next(reader, None)
        if header is None or header[0] != 'iteration':
            raise ContractError(f'{path} is not an LED pattern file')
        for row in reader:
            if len(row) != len(header):
                raise ContractError(f'{path} has a row with {len(row)} entries,'
                                    f' expected {len(header)}')
            output.append((int(row[0]), np.array([float(v) for v in row[1:]])))
    if len(output) == 0:
        raise ContractError(f'{path} contains no LED patterns')
    return output
