use std::io;

fn main() {
    let debug = std::env::var("CAE_SHIM_DEBUG").is_ok_and(|v| v == "1");
    let code = cae::stub::serve(io::stdin().lock(), io::stdout().lock(), debug);
    std::process::exit(code);
}
