//! Maximum capture with a routing budget: choose at most `C` facility
//! locations, reachable on one depot tour within `t_max`, to maximize the
//! demand captured under a multinomial logit choice model.

pub mod cuts;
pub mod fixtures;
pub mod ils;
pub mod instance;
pub mod model;
pub mod objective;
pub mod oracle;
pub mod solver;
pub mod subset;
