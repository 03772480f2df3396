#pragma once

#define SCARKIT_VERSION "0.1.0"
