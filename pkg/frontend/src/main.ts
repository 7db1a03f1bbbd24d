import { ViewerApp } from './viewer.js';

// module scripts run after the document is parsed, so the elements exist
new ViewerApp().init().catch((err) => {
  const status = document.getElementById('status');
  if (status) status.textContent = err instanceof Error ? err.message : String(err);
});
