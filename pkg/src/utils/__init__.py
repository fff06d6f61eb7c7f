# candi-lab utilities