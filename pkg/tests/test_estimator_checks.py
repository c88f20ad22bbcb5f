from sklearn.utils.estimator_checks import parametrize_with_checks

from vflshap import EqualWidthBinner, ShapleyCMIValuator


@parametrize_with_checks([EqualWidthBinner(), ShapleyCMIValuator(n_permutations=3)])
def test_sklearn_compatible(estimator, check):
    check(estimator)
