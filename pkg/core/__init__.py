"""cogtraj core: data, features, autodiff, model, training and evaluation."""
