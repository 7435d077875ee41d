"""A recurrent network learns the parity of 4-bit sequences.

Every (layer, time step) state is its own variable, so the constraint
graph is the unrolled network and each gradient touches t-1, t and t+1
only.  The weights W and U are shared across time.
"""
from localprop import NetworkSpec, RegConfig, TrainConfig, build_graph, train
from localprop.data import gen_parity_sequences

spec = NetworkSpec("rnn", (1, 8), out_width=1, seq_len=4)
graph = build_graph(spec)
data = gen_parity_sequences(64, 4, seed=3)
config = TrainConfig(eta_w=0.005, eta_x=0.1, eta_lambda=0.1, max_iters=100_000,
                     target_residual=1e-3, seed=3, reg=RegConfig(rho=1.0), log_every=2000)


def report(m):
    print(f"iter {m.iter:6d}  loss {m.loss_term:.4f}  max|G| {m.max_abs_residual:.2e}  "
          f"accuracy {m.train_accuracy:.2f}")
    return m.train_accuracy == 1.0 and m.max_abs_residual < 1e-2


run = train(graph, data, config, callback=report)
print(f"stopped ({run.stop_reason}) after {run.iterations} iterations, "
      f"final accuracy {run.final.train_accuracy}")
