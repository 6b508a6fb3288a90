# Agents orchestrating constellation checks, ensembles and plots
