#pragma once

namespace qwm {

int cli_main(int argc, char** argv);

} // namespace qwm
