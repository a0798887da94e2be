fn main() {
    let code = pplab_tool::run_with(std::env::args(), std::env::vars().collect(), &mut std::io::stdout());
    std::process::exit(code);
}
