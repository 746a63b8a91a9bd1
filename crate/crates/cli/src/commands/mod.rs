pub mod calc;
pub mod datagen;
pub mod ddp;
pub mod evalcmd;
pub mod pretrain;
pub mod probe;
pub mod sample;
pub mod seg;
pub mod surgery;
