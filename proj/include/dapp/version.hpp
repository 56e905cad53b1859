// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef DAPP_VERSION_HPP
#define DAPP_VERSION_HPP

namespace dapp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dapp

#endif
