"""Cross-lingual extractive QA with adversarial feature alignment.

The package is a from-scratch numpy stack: a reverse-mode autodiff engine,
a QANet-style reading model with per-language dependent encoder stacks, a
convolutional language discriminator trained GAN-style against them, and
the data / translation / evaluation plumbing needed to run train-on-target,
test-on-source experiments end to end on synthetic bilingual corpora.
"""

__version__ = "0.1.0"
