"""The SMO solver on problems whose answers are known in closed form."""
import numpy as np

from cardiorad.svm import train_binary

# Two points: the max-margin line is the perpendicular bisector.
m = train_binary(np.array([[-1.0, 0.0], [1.0, 0.0]]), np.array([-1.0, 1.0]), C=10.0)
print(f"two points: w={m.weight}, b={m.bias:+.3f}, alpha={m.alpha}")
print(f"  f(0.5, 3) = {m.decision_function([[0.5, 3.0]])[0]:.3f}")

# XOR cannot be split by a line; the linear machine leaves slack.
X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
y = np.array([1.0, 1.0, -1.0, -1.0])
lin = train_binary(X, y, C=1.0)
rbf = train_binary(X, y, kernel="rbf", gamma=1.0, C=10.0)
print(f"XOR linear accuracy {np.mean(np.sign(lin.decision_function(X)) == y):.2f}, "
      f"rbf accuracy {np.mean(np.where(rbf.decision_function(X) >= 0, 1, -1) == y):.2f}")

# The dual objective climbs with every pair update.
rng = np.random.default_rng(0)
X = rng.normal(size=(40, 3))
y = np.where(X[:, 0] + 0.4 * rng.normal(size=40) > 0, 1.0, -1.0)
m = train_binary(X, y, record_objective=1000)
h = m.objective_history
print(f"noisy set: {m.iterations} updates, objective {h[0]:.3f} -> {h[-1]:.3f}, "
      f"{int((m.alpha > 0).sum())} support vectors")
