# core/optimizer.py
"""
Adam disperso ("lazy") para tablas de embeddings

Solo las filas tocadas en un paso actualizan sus momentos y parámetros. La
corrección de sesgo usa el contador global de pasos.
"""

from typing import Dict, Tuple

import numpy as np

from config import Config


class SparseAdam:
    """
    Estado del optimizador: momentos por tabla, asignados la primera vez que
    la tabla recibe gradiente
    """

    def __init__(self, lr: float = Config.LEARNING_RATE,
                 beta1: float = Config.ADAM_BETA1,
                 beta2: float = Config.ADAM_BETA2,
                 epsilon: float = Config.ADAM_EPSILON):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon

        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: Dict[str, np.ndarray],
             grads: Dict[str, Tuple[np.ndarray, np.ndarray]]) -> None:
        """
        Un paso de Adam sobre las filas tocadas

        Args:
            params: {tabla: array} (se modifican in place)
            grads: {tabla: (filas únicas, gradiente)} como devuelve GradientBuffer.reduce()
        """
        self.t += 1

        # Corrección de sesgo precalculada una vez por paso
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        step_size = self.lr / bc1

        for table, (rows, g) in grads.items():
            if table not in self.m:
                self.m[table] = np.zeros_like(params[table])
                self.v[table] = np.zeros_like(params[table])

            m_rows = self.m[table][rows]
            v_rows = self.v[table][rows]

            m_rows = self.beta1 * m_rows + (1.0 - self.beta1) * g
            v_rows = self.beta2 * v_rows + (1.0 - self.beta2) * (g * g)

            self.m[table][rows] = m_rows
            self.v[table][rows] = v_rows

            denom = np.sqrt(v_rows / bc2) + self.epsilon
            params[table][rows] -= step_size * m_rows / denom

    def state(self) -> Dict:
        return {
            'step': self.t,
            'tables': sorted(self.m),
            'moments_finite': all(np.isfinite(self.m[k]).all() and np.isfinite(self.v[k]).all()
                                  for k in self.m),
        }
