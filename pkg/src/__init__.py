# candi-lab core package