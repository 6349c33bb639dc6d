"""Structure-free graph condensation: trajectory meta-matching synthesis,
tangent-kernel checkpoint selection, and train-from-scratch evaluation."""

from .condenser import (CondensedData, MetaMatchConfig, condense, kcenter_init,
                        meta_match_grad, meta_match_loss, plan_labels,
                        unroll_student)
from .data import (GraphDataset, NormalizedAdj, induced_subgraph, load_dataset,
                   normalize_adjacency, row_normalize_features, save_dataset)
from .evaluator import (EvalConfig, EvalReport, coreset_select,
                        cross_arch_eval, emit_report, eval_condensed)
from .gntk import (GntkConfig, GraphView, KernelMatrix, gnf_score,
                   gntk_node_kernel, krr_predict, relu_dual)
from .nn import GnnArch, TrainConfig, accuracy, forward, loss_and_grad, train
from .synth import make_sbm_fixture
from .trajectory import (ExpertConfig, Segment, TrajectoryBank, load_bank,
                         sample_segment, save_bank, train_experts)

__version__ = "0.1.0"
