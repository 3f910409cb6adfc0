import numpy as np
import pytest

from reram_guard.nn import accuracy, exact_forward, init_mlp, train_reference_mlp


def balanced_subset(data, per_class=100):
    idx = np.concatenate([np.flatnonzero(data.labels == c)[:per_class] for c in range(10)])
    return data.images[idx], data.labels[idx]


def test_trained_accuracy(reference_mlp, mnist_test):
    acc = accuracy(exact_forward(reference_mlp, mnist_test.images), mnist_test.labels)
    assert acc >= 0.90


def test_deterministic(mnist_train):
    images, labels = mnist_train.images[:3000], mnist_train.labels[:3000]
    a = train_reference_mlp(images, labels, seed=7, epochs=2)
    b = train_reference_mlp(images, labels, seed=7, epochs=2)
    c = train_reference_mlp(images, labels, seed=8, epochs=2)
    for i in a.weighted_layers():
        la, lb = a.layers[i], b.layers[i]
        assert la.weights.tobytes() == lb.weights.tobytes()
        assert la.bias.tobytes() == lb.bias.tobytes()
    assert a.layers[1].weights.tobytes() != c.layers[1].weights.tobytes()


@pytest.mark.parametrize("seed", range(5))
def test_untrained_is_chance(mnist_test, seed):
    images, labels = balanced_subset(mnist_test)
    acc = accuracy(exact_forward(init_mlp(seed=seed), images), labels)
    assert abs(acc - 0.10) <= 0.05


def test_architecture(reference_mlp):
    w1, w2 = (reference_mlp.layers[i] for i in reference_mlp.weighted_layers())
    assert w1.weights.shape == (784, 64) and w2.weights.shape == (64, 10)
    assert reference_mlp.output_shape == (10,)


@pytest.mark.parametrize("images,labels", [(np.zeros((0, 28, 28)), np.zeros(0, int)),
                                           (np.zeros((3, 28, 28)), np.zeros(2, int)),
                                           (np.zeros((3, 10, 10)), np.zeros(3, int))])
def test_bad_dataset(images, labels):
    with pytest.raises(ValueError):
        train_reference_mlp(images, labels, epochs=1)
