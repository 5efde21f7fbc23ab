/* dialogen - hierarchical latent-variable dialogue models.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <string>
#include <vector>

namespace dialogen::cli {

/// Entry point of the `dialogen` command-line tool (exposed so tests can
/// drive subcommands in-process). Returns the process exit code: 0 on
/// success, 2 on usage errors, 1 on runtime failure.
int run(const std::vector<std::string>& args);

}  // namespace dialogen::cli
