use clap::Parser;

use stopped_walk::cli::{main_with, Args};

fn main() {
    std::process::exit(main_with(Args::parse()));
}
