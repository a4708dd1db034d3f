// Entry point: picks the observer or dashboard screen from URL params.
//   ?study=<id>&annotator=<token>          observer flow
//   ?study=<id>&role=dashboard             experimenter dashboard
// The service origin defaults to the page origin; override with ?api=.

import { StudyClient } from "./api"
import { DashboardModel, startPolling } from "./dashboard"
import { ObserverSession } from "./observer"
import { renderDashboard, renderObserver } from "./render"

function mountObserver(
  root: HTMLElement,
  client: StudyClient,
  studyId: string,
  annotator: string,
): void {
  const session = new ObserverSession(client, studyId, annotator)

  const draw = () => {
    root.innerHTML = renderObserver(session.view())
    const first = document.getElementById("choose-first")
    const second = document.getElementById("choose-second")
    if (first && second) {
      const lock = () => {
        first.setAttribute("disabled", "disabled")
        second.setAttribute("disabled", "disabled")
      }
      first.addEventListener("click", async () => {
        lock()
        await session.submit("first")
        draw()
      })
      second.addEventListener("click", async () => {
        lock()
        await session.submit("second")
        draw()
      })
    }
  }

  void session.load().then(draw)
}

function mountDashboard(
  root: HTMLElement,
  client: StudyClient,
  studyId: string,
): void {
  const model = new DashboardModel(client, studyId)
  const draw = () => {
    root.innerHTML = renderDashboard(model.state)
    const button = document.getElementById("advance")
    if (button) {
      button.addEventListener("click", async () => {
        button.setAttribute("disabled", "disabled")
        await model.advance()
        draw()
      })
    }
  }
  startPolling(model, draw)
}

function main(): void {
  const root = document.getElementById("app")
  if (!root) return
  const params = new URLSearchParams(window.location.search)
  const studyId = params.get("study")
  const api = params.get("api") ?? window.location.origin
  if (!studyId) {
    root.innerHTML =
      '<div class="terminal">missing ?study=&lt;id&gt; parameter</div>'
    return
  }
  const client = new StudyClient(api)
  const annotator = params.get("annotator")
  if (params.get("role") === "dashboard" || !annotator) {
    mountDashboard(root, client, studyId)
  } else {
    mountObserver(root, client, studyId, annotator)
  }
}

main()
