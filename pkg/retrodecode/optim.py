import typing

import numpy as np


class Adam:
    """
    Adam with bias-corrected first and second moment estimates.

    Parameters are updated in place; moment buffers are created per parameter name on first use.
    """

    def __init__(self, learning_rate: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        if not learning_rate > 0:
            raise ValueError("learning_rate must be positive, got {}".format(learning_rate))
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError("beta1 and beta2 must be in [0, 1)")

        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.__first: typing.Dict[str, np.ndarray] = {}
        self.__second: typing.Dict[str, np.ndarray] = {}
        self.__steps = 0

    @property
    def steps(self) -> int:
        return self.__steps

    def step(self, params: typing.Dict[str, np.ndarray], grads: typing.Dict[str, np.ndarray]) -> None:
        self.__steps += 1
        correction1 = 1.0 - self.beta1**self.__steps
        correction2 = 1.0 - self.beta2**self.__steps

        for name, param in params.items():
            grad = grads[name]
            if name not in self.__first:
                self.__first[name] = np.zeros_like(param)
                self.__second[name] = np.zeros_like(param)

            first, second = self.__first[name], self.__second[name]
            first *= self.beta1
            first += (1.0 - self.beta1) * grad
            second *= self.beta2
            second += (1.0 - self.beta2) * (grad * grad)

            param -= self.learning_rate * (first / correction1) / (np.sqrt(second / correction2) + self.epsilon)
