"""Small NumPy CNN stack: architectures, gradients, ADAM, training."""
from .architectures import (
    Conv,
    Dense,
    Dropout,
    MaxPool,
    NetworkSpec,
    ReLU,
    Softmax,
    build_architecture,
    build_reduced_architecture,
    flop_count,
    layer_shapes,
    pnn_wrap,
    spec_from_dict,
    spec_to_dict,
    strip_zeroth,
    weight_count,
)
from .network import backward, forward, init_params, logits, loss_and_grads, predict_proba
from .optim import AdamState
from .training import (TrainConfig, TrainState, accuracy, extract_pnn_filter, init_state, run_epoch, split_pnn,
                       train)
