from data_science.src.objective.losses import (LossBreakdown, DEFAULT_ALPHA, masked_mse, combined_loss,
                                               combined_loss_and_grad, cross_entropy, cross_entropy_and_grad)

__all__ = ['LossBreakdown', 'DEFAULT_ALPHA', 'masked_mse', 'combined_loss', 'combined_loss_and_grad',
           'cross_entropy', 'cross_entropy_and_grad']
