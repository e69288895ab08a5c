"""RNA sequence design with DQN, PPO and greedy hill climbing over a pair-energy fold."""
from .dqn import DqnConfig, run_dqn
from .environment import EnvConfig, RewardPenalty, RnaEnv, Terminate, TryAgain
from .fitness import BuiltinModel, EvalCounter, ExternalModel, fitness_of, nussinov_fold
from .greedy import GreedyConfig, run_greedy
from .harness import ExperimentConfig, run_ablation_loop, run_ablation_reward, run_experiment
from .ppo import PpoConfig, run_ppo
from .sequence import RnaSequence, parse_sequence

__version__ = "0.1.0"
