"""
vqpe
====

Pulmonary-embolism screening on ventilation/perfusion lung scans: image
preprocessing, GA registration of each view pair, subtraction, PCA with
statistical-overlay input selection, and a Hybrid Monte Carlo Bayesian MLP
committee. Synthetic phantom cases stand in for clinical data.

Modules
-------
::

 imaging      -- GrayImage, P5 I/O, stretch, hot spots, smoothing, segmentation
 phantom      -- synthetic V/Q cases and the Shepp-Logan phantom
 registration -- transform model, Jaccard fitness, genetic-algorithm alignment
 features     -- subtraction, PCA, SoF selection, scaling
 bayesnet     -- MLP, HMC sampling, committee prediction
 evaluation   -- stratified split, per-class metrics, ROC/AUC
 pipeline     -- stage orchestration, sweeps, registration benchmark
 dataset      -- manifest files
 cli          -- command-line driver (``python -m vqpe``)
"""

__version__ = "0.1.0"
