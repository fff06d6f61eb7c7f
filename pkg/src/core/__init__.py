# candi-lab core: analytics, kernel, frontier, config and CLI