use clap::Parser;

fn main() {
    let args = qlqg::cli::Args::parse();
    std::process::exit(qlqg::cli::main_with(&args));
}
