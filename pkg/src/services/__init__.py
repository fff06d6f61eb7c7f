# candi-lab services: denoisers, training, samplers, classifiers